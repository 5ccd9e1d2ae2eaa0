#include "vfmpc/qp.hpp"

#include <Eigen/Dense>
#include <sstream>

namespace vfmpc {

namespace {

constexpr double kInf = 1e30;

// Stacked constraint view: rows of A_eq (l = u = b), A_in, then box rows.
struct Stacked {
  MatrixXd A;
  VectorXd l, u;
  std::vector<bool> is_eq;
};

Stacked stack_constraints(const QuadraticProgram& qp) {
  const int n = qp.n();
  const int me = static_cast<int>(qp.b_eq.size());
  const int mi = static_cast<int>(qp.in_lb.size());
  const bool has_box = qp.z_lb.size() > 0 || qp.z_ub.size() > 0;
  const int mb = has_box ? n : 0;
  Stacked s;
  s.A.setZero(me + mi + mb, n);
  s.l.setConstant(me + mi + mb, -kInf);
  s.u.setConstant(me + mi + mb, kInf);
  s.is_eq.assign(me + mi + mb, false);
  if (me > 0) {
    s.A.topRows(me) = qp.A_eq;
    s.l.head(me) = qp.b_eq;
    s.u.head(me) = qp.b_eq;
    for (int i = 0; i < me; ++i) s.is_eq[i] = true;
  }
  if (mi > 0) {
    s.A.middleRows(me, mi) = qp.A_in;
    s.l.segment(me, mi) = qp.in_lb;
    s.u.segment(me, mi) = qp.in_ub;
  }
  if (mb > 0) {
    s.A.bottomRows(n).setIdentity();
    if (qp.z_lb.size() > 0) s.l.tail(n) = qp.z_lb;
    if (qp.z_ub.size() > 0) s.u.tail(n) = qp.z_ub;
  }
  for (int i = 0; i < s.l.size(); ++i)
    VFMPC_CHECK(s.l[i] <= s.u[i] + 1e-12, "QP constraint has l > u");
  return s;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

}  // namespace

void QuadraticProgram::validate() const {
  const int nn = n();
  VFMPC_CHECK(P.rows() == nn && P.cols() == nn, "QP: P dimension mismatch");
  VFMPC_CHECK((P - P.transpose()).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + P.lpNorm<Eigen::Infinity>()),
              "QP: P not symmetric");
  if (A_eq.size() > 0) {
    VFMPC_CHECK(A_eq.cols() == nn && A_eq.rows() == b_eq.size(), "QP: A_eq dimension mismatch");
  }
  if (A_in.size() > 0) {
    VFMPC_CHECK(A_in.cols() == nn && A_in.rows() == in_lb.size() && A_in.rows() == in_ub.size(),
                "QP: A_in dimension mismatch");
  }
  if (z_lb.size() > 0) VFMPC_CHECK(z_lb.size() == nn, "QP: z_lb dimension mismatch");
  if (z_ub.size() > 0) VFMPC_CHECK(z_ub.size() == nn, "QP: z_ub dimension mismatch");
}

void kkt_residuals(const QuadraticProgram& qp, const VectorXd& z, const VectorXd& y, double* primal,
                   double* dual) {
  const Stacked s = stack_constraints(qp);
  const VectorXd Az = s.A * z;
  double rp = 0.0;
  for (int i = 0; i < Az.size(); ++i) {
    rp = std::max(rp, Az[i] - s.u[i]);
    rp = std::max(rp, s.l[i] - Az[i]);
  }
  rp = std::max(rp, 0.0);
  const VectorXd Pz = qp.P * z;
  const VectorXd Aty = s.A.transpose() * y;
  const double rd = inf_norm(Pz + qp.g + Aty);
  const double sp = std::max(1.0, inf_norm(Az));
  const double sd = std::max({1.0, inf_norm(Pz), inf_norm(qp.g), inf_norm(Aty)});
  *primal = rp / sp;
  *dual = rd / sd;
}

QpSolution QpSolver::solve(const QuadraticProgram& qp, const std::optional<QpWarmStart>& warm) {
  qp.validate();
  const int n = qp.n();
  Stacked s = stack_constraints(qp);
  const int m = static_cast<int>(s.l.size());
  MatrixXd P = 0.5 * (qp.P + qp.P.transpose());

  QpSolution out;
  if (m == 0) {
    Eigen::LDLT<MatrixXd> ldlt(P + settings_.sigma * MatrixXd::Identity(n, n));
    out.z = ldlt.solve(-qp.g);
    out.y.resize(0);
    out.objective = 0.5 * out.z.dot(P * out.z) + qp.g.dot(out.z);
    out.status = QpStatus::Solved;
    kkt_residuals(qp, out.z, VectorXd::Zero(0), &out.primal_residual, &out.dual_residual);
    return out;
  }

  // --- Ruiz equilibration on [P A'; A 0] plus cost scaling ---
  VectorXd D = VectorXd::Ones(n), E = VectorXd::Ones(m);
  double c_scale = 1.0;
  {
    MatrixXd Pw = P;
    MatrixXd Aw = s.A;
    VectorXd gw = qp.g;
    for (int pass = 0; pass < 10; ++pass) {
      VectorXd dcol(n), erow(m);
      for (int j = 0; j < n; ++j) {
        double nrm = std::max(inf_norm(Pw.col(j)), inf_norm(Aw.col(j)));
        dcol[j] = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
      }
      for (int i = 0; i < m; ++i) {
        double nrm = inf_norm(Aw.row(i).transpose());
        erow[i] = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
      }
      Pw = dcol.asDiagonal() * Pw * dcol.asDiagonal();
      Aw = erow.asDiagonal() * Aw * dcol.asDiagonal();
      gw = dcol.asDiagonal() * gw;
      D = D.cwiseProduct(dcol);
      E = E.cwiseProduct(erow);
      // Cost scaling pass.
      double pnorm = 0.0;
      for (int j = 0; j < n; ++j) pnorm += inf_norm(Pw.col(j));
      pnorm /= n;
      double gnorm = inf_norm(gw);
      double cs = 1.0 / std::max(1e-12, std::max(pnorm, gnorm));
      if (!std::isfinite(cs) || cs <= 0) cs = 1.0;
      Pw *= cs;
      gw *= cs;
      c_scale *= cs;
    }
  }
  MatrixXd Ps = c_scale * (D.asDiagonal() * P * D.asDiagonal());
  VectorXd gs = c_scale * (D.asDiagonal() * qp.g);
  MatrixXd As = E.asDiagonal() * s.A * D.asDiagonal();
  VectorXd ls(m), us(m);
  for (int i = 0; i < m; ++i) {
    ls[i] = s.l[i] <= -kInf ? -kInf : E[i] * s.l[i];
    us[i] = s.u[i] >= kInf ? kInf : E[i] * s.u[i];
  }

  VectorXd rho_vec(m);
  double rho_bar = settings_.rho;
  auto set_rho = [&](double rb) {
    for (int i = 0; i < m; ++i) rho_vec[i] = s.is_eq[i] ? 1e3 * rb : rb;
  };
  set_rho(rho_bar);

  Eigen::LDLT<MatrixXd> ldlt;
  auto factor = [&]() {
    MatrixXd K = Ps + settings_.sigma * MatrixXd::Identity(n, n) +
                 As.transpose() * rho_vec.asDiagonal() * As;
    ldlt.compute(K);
  };
  factor();

  VectorXd x = VectorXd::Zero(n), zc = VectorXd::Zero(m), y = VectorXd::Zero(m);
  if (warm) {
    if (warm->z.size() == n) x = D.cwiseInverse().asDiagonal() * warm->z;
    if (warm->y.size() == m) y = c_scale * (E.cwiseInverse().asDiagonal() * warm->y);
    zc = As * x;
    for (int i = 0; i < m; ++i) zc[i] = clamp(zc[i], ls[i], us[i]);
  }

  auto unscale_x = [&](const VectorXd& xs) { return VectorXd(D.asDiagonal() * xs); };
  auto unscale_y = [&](const VectorXd& ys) { return VectorXd((E.asDiagonal() * ys) / c_scale); };

  const double alpha = settings_.alpha;
  int iter = 0;
  bool solved = false, infeasible = false;
  int refactor_budget = 12;
  VectorXd dy_acc = VectorXd::Zero(m);

  for (iter = 1; iter <= settings_.max_iter; ++iter) {
    const VectorXd rhs = settings_.sigma * x - gs + As.transpose() * (rho_vec.cwiseProduct(zc) - y);
    const VectorXd xt = ldlt.solve(rhs);
    const VectorXd zt = As * xt;
    const VectorXd x_next = alpha * xt + (1.0 - alpha) * x;
    VectorXd z_relax = alpha * zt + (1.0 - alpha) * zc;
    VectorXd z_next(m);
    for (int i = 0; i < m; ++i)
      z_next[i] = clamp(z_relax[i] + y[i] / rho_vec[i], ls[i], us[i]);
    const VectorXd y_next = y + rho_vec.cwiseProduct(z_relax - z_next);
    dy_acc = y_next - y;
    x = x_next;
    zc = z_next;
    y = y_next;

    if (iter % settings_.check_interval == 0 || iter == settings_.max_iter) {
      const VectorXd xu = unscale_x(x);
      const VectorXd yu = unscale_y(y);
      const VectorXd Ax = s.A * xu;
      double rp = 0.0;
      for (int i = 0; i < m; ++i) {
        rp = std::max(rp, Ax[i] - s.u[i]);
        rp = std::max(rp, s.l[i] - Ax[i]);
      }
      rp = std::max(rp, 0.0);
      const VectorXd Pz = P * xu;
      const VectorXd Aty = s.A.transpose() * yu;
      const double rd = inf_norm(Pz + qp.g + Aty);
      const double ep = settings_.eps_abs + settings_.eps_rel * std::max(inf_norm(Ax), 1.0);
      const double ed = settings_.eps_abs +
                        settings_.eps_rel * std::max({inf_norm(Pz), inf_norm(qp.g), inf_norm(Aty), 1.0});
      if (rp <= ep && rd <= ed) {
        solved = true;
        break;
      }
      // Primal infeasibility certificate from the dual update direction.
      const double dn = inf_norm(dy_acc);
      if (dn > 1e-12) {
        const VectorXd dyu = unscale_y(dy_acc) / dn * c_scale;
        if (inf_norm(s.A.transpose() * dyu) <= 1e-10 * std::max(1.0, inf_norm(dyu))) {
          double support = 0.0;
          bool bounded = true;
          for (int i = 0; i < m; ++i) {
            if (dyu[i] > 1e-14) {
              if (s.u[i] >= kInf) { bounded = false; break; }
              support += s.u[i] * dyu[i];
            } else if (dyu[i] < -1e-14) {
              if (s.l[i] <= -kInf) { bounded = false; break; }
              support += s.l[i] * dyu[i];
            }
          }
          if (bounded && support < -1e-10) {
            infeasible = true;
            break;
          }
        }
      }
      // Adaptive rho.
      if (iter % (settings_.check_interval * 8) == 0 && refactor_budget > 0) {
        const double ratio = std::sqrt((rp / std::max(ep, 1e-16)) / std::max(rd / std::max(ed, 1e-16), 1e-16));
        if (ratio > 5.0 || ratio < 0.2) {
          rho_bar = clamp(rho_bar * ratio, 1e-6, 1e6);
          set_rho(rho_bar);
          factor();
          --refactor_budget;
        }
      }
    }
  }

  out.z = unscale_x(x);
  out.y = unscale_y(y);
  out.iterations = std::min(iter, settings_.max_iter);
  out.status = infeasible ? QpStatus::Infeasible : (solved ? QpStatus::Solved : QpStatus::MaxIter);

  // --- Polish: exact KKT solve on the detected active set ---
  if (settings_.polish && !infeasible) {
    std::vector<int> act;
    std::vector<double> act_b;
    const VectorXd Ax = s.A * out.z;
    for (int i = 0; i < m; ++i) {
      const double gap = std::max(1e-7 * std::max(1.0, std::abs(s.u[i]) + std::abs(s.l[i])), 1e-9);
      const bool lo = s.l[i] > -kInf && (Ax[i] - s.l[i] < gap || (s.is_eq[i])) ;
      const bool hi = s.u[i] < kInf && (s.u[i] - Ax[i] < gap) && !s.is_eq[i];
      if (s.is_eq[i]) {
        act.push_back(i);
        act_b.push_back(s.l[i]);
      } else if (lo && out.y[i] < 1e-10) {
        act.push_back(i);
        act_b.push_back(s.l[i]);
      } else if (hi && out.y[i] > -1e-10) {
        act.push_back(i);
        act_b.push_back(s.u[i]);
      }
    }
    const int ma = static_cast<int>(act.size());
    MatrixXd K = MatrixXd::Zero(n + ma, n + ma);
    K.topLeftCorner(n, n) = P + 1e-11 * MatrixXd::Identity(n, n);
    for (int k = 0; k < ma; ++k) {
      K.block(0, n + k, n, 1) = s.A.row(act[k]).transpose();
      K.block(n + k, 0, 1, n) = s.A.row(act[k]);
      K(n + k, n + k) = -1e-11;
    }
    VectorXd rhs(n + ma);
    rhs.head(n) = -qp.g;
    for (int k = 0; k < ma; ++k) rhs[n + k] = act_b[k];
    Eigen::PartialPivLU<MatrixXd> lu(K);
    VectorXd sol = lu.solve(rhs);
    // One round of iterative refinement.
    sol += lu.solve(rhs - K * sol);
    VectorXd z_pol = sol.head(n);
    VectorXd y_pol = VectorXd::Zero(m);
    for (int k = 0; k < ma; ++k) y_pol[act[k]] = sol[n + k];
    double rp0, rd0, rp1, rd1;
    kkt_residuals(qp, out.z, out.y, &rp0, &rd0);
    kkt_residuals(qp, z_pol, y_pol, &rp1, &rd1);
    bool signs_ok = true;
    for (int k = 0; k < ma; ++k) {
      const int i = act[k];
      if (s.is_eq[i]) continue;
      const bool at_lower = std::abs(act_b[k] - s.l[i]) < 1e-12;
      if (at_lower && y_pol[i] > 1e-7) signs_ok = false;
      if (!at_lower && y_pol[i] < -1e-7) signs_ok = false;
    }
    if (z_pol.allFinite() && signs_ok && std::max(rp1, rd1) <= std::max(rp0, rd0)) {
      out.z = z_pol;
      out.y = y_pol;
    }
  }

  kkt_residuals(qp, out.z, out.y, &out.primal_residual, &out.dual_residual);
  if (out.status == QpStatus::MaxIter &&
      std::max(out.primal_residual, out.dual_residual) <= settings_.kkt_tol)
    out.status = QpStatus::Solved;
  if (out.status == QpStatus::Solved &&
      std::max(out.primal_residual, out.dual_residual) > settings_.kkt_tol)
    out.status = QpStatus::MaxIter;
  out.objective = 0.5 * out.z.dot(P * out.z) + qp.g.dot(out.z);
  return out;
}

QpSolution solve_qp(const QuadraticProgram& qp, const std::optional<QpWarmStart>& warm,
                    const QpSettings& settings) {
  QpSolver solver(settings);
  return solver.solve(qp, warm);
}

std::string dump_qp(const QuadraticProgram& qp) {
  std::ostringstream os;
  os.precision(17);
  auto mat = [&](const char* nm, const MatrixXd& M) {
    os << nm << " " << M.rows() << " " << M.cols() << "\n";
    for (int r = 0; r < M.rows(); ++r) {
      for (int c = 0; c < M.cols(); ++c) os << M(r, c) << (c + 1 == M.cols() ? '\n' : ' ');
    }
  };
  auto vec = [&](const char* nm, const VectorXd& v) {
    os << nm << " " << v.size() << "\n";
    for (int i = 0; i < v.size(); ++i) os << v[i] << (i + 1 == v.size() ? '\n' : ' ');
    if (v.size() == 0) os << "\n";
  };
  mat("P", qp.P);
  vec("g", qp.g);
  mat("A_eq", qp.A_eq);
  vec("b_eq", qp.b_eq);
  mat("A_in", qp.A_in);
  vec("in_lb", qp.in_lb);
  vec("in_ub", qp.in_ub);
  vec("z_lb", qp.z_lb);
  vec("z_ub", qp.z_ub);
  return os.str();
}

}  // namespace vfmpc
