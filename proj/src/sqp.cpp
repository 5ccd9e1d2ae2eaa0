#include "vfmpc/sqp.hpp"

namespace vfmpc {

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& z,
                     double step) {
  const VectorXd f0 = f(z);
  MatrixXd J(f0.size(), z.size());
  VectorXd zp = z;
  for (int j = 0; j < z.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(z[j]));
    zp[j] = z[j] + h;
    J.col(j) = (f(zp) - f0) / h;
    zp[j] = z[j];
  }
  return J;
}

namespace {

double merit(const NlpProblem& nlp, const VectorXd& r, const VectorXd& ce, const VectorXd& ci,
             double nu) {
  double phi = 0.5 * r.squaredNorm();
  for (int i = 0; i < ce.size(); ++i) phi += nu * std::abs(ce[i]);
  for (int i = 0; i < ci.size(); ++i) {
    if (nlp.in_ub.size()) phi += nu * std::max(0.0, ci[i] - nlp.in_ub[i]);
    if (nlp.in_lb.size()) phi += nu * std::max(0.0, nlp.in_lb[i] - ci[i]);
  }
  return phi;
}

double violation(const NlpProblem& nlp, const VectorXd& ce, const VectorXd& ci) {
  double v = 0.0;
  for (int i = 0; i < ce.size(); ++i) v = std::max(v, std::abs(ce[i]));
  for (int i = 0; i < ci.size(); ++i) {
    if (nlp.in_ub.size()) v = std::max(v, ci[i] - nlp.in_ub[i]);
    if (nlp.in_lb.size()) v = std::max(v, nlp.in_lb[i] - ci[i]);
  }
  return v;
}

}  // namespace

SqpResult solve_sqp(const NlpProblem& nlp, const VectorXd& z0, const SqpOptions& options) {
  VFMPC_CHECK(nlp.residual != nullptr, "solve_sqp: residual callback required");
  const int n = nlp.n > 0 ? nlp.n : static_cast<int>(z0.size());
  VFMPC_CHECK(z0.size() == n, "solve_sqp: z0 dimension mismatch");

  auto eval_r = nlp.residual;
  auto eval_ce = nlp.c_eq ? nlp.c_eq : [](const VectorXd&) { return VectorXd(); };
  auto eval_ci = nlp.c_in ? nlp.c_in : [](const VectorXd&) { return VectorXd(); };

  VectorXd z = z0;
  if (nlp.z_lb.size()) z = z.cwiseMax(nlp.z_lb);
  if (nlp.z_ub.size()) z = z.cwiseMin(nlp.z_ub);

  SqpResult res;
  res.z = z;
  double nu = 10.0;
  QpSolver qp_solver(options.qp);

  VectorXd r = eval_r(z), ce = eval_ce(z), ci = eval_ci(z);
  double best_merit = merit(nlp, r, ce, ci, nu);
  res.z = z;
  res.cost = 0.5 * r.squaredNorm();
  res.constraint_violation = violation(nlp, ce, ci);

  for (int it = 1; it <= options.max_iter; ++it) {
    res.iterations = it;
    const MatrixXd Jr = nlp.residual_jac ? nlp.residual_jac(z) : fd_jacobian(eval_r, z, options.fd_step);
    MatrixXd Jce, Jci;
    if (ce.size()) Jce = nlp.c_eq_jac ? nlp.c_eq_jac(z) : fd_jacobian(eval_ce, z, options.fd_step);
    if (ci.size()) Jci = nlp.c_in_jac ? nlp.c_in_jac(z) : fd_jacobian(eval_ci, z, options.fd_step);

    QuadraticProgram qp;
    qp.P = Jr.transpose() * Jr + options.gn_reg * MatrixXd::Identity(n, n);
    qp.g = Jr.transpose() * r;
    if (ce.size()) {
      qp.A_eq = Jce;
      qp.b_eq = -ce;
    }
    if (ci.size()) {
      qp.A_in = Jci;
      qp.in_lb = nlp.in_lb.size() ? VectorXd(nlp.in_lb - ci) : VectorXd::Constant(ci.size(), -1e30);
      qp.in_ub = nlp.in_ub.size() ? VectorXd(nlp.in_ub - ci) : VectorXd::Constant(ci.size(), 1e30);
    }
    if (nlp.z_lb.size()) qp.z_lb = nlp.z_lb - z;
    if (nlp.z_ub.size()) qp.z_ub = nlp.z_ub - z;

    QpSolution sol = qp_solver.solve(qp);
    ++res.qp_count;
    if (sol.status == QpStatus::Infeasible && ce.size()) {
      // Elastic relaxation: slacks on the equality rows, l1-penalized.
      const int me = static_cast<int>(ce.size());
      QuadraticProgram eqp;
      const int ne = n + 2 * me;
      eqp.P = MatrixXd::Zero(ne, ne);
      eqp.P.topLeftCorner(n, n) = qp.P;
      eqp.g = VectorXd::Zero(ne);
      eqp.g.head(n) = qp.g;
      const double big = 1e4 * std::max(1.0, nu);
      eqp.g.tail(2 * me).setConstant(big);
      eqp.A_eq = MatrixXd::Zero(me, ne);
      eqp.A_eq.leftCols(n) = Jce;
      eqp.A_eq.block(0, n, me, me) = -MatrixXd::Identity(me, me);
      eqp.A_eq.block(0, n + me, me, me) = MatrixXd::Identity(me, me);
      eqp.b_eq = -ce;
      if (ci.size()) {
        eqp.A_in = MatrixXd::Zero(ci.size(), ne);
        eqp.A_in.leftCols(n) = Jci;
        eqp.in_lb = qp.in_lb;
        eqp.in_ub = qp.in_ub;
      }
      eqp.z_lb = VectorXd::Constant(ne, -1e30);
      eqp.z_ub = VectorXd::Constant(ne, 1e30);
      if (nlp.z_lb.size()) eqp.z_lb.head(n) = qp.z_lb;
      if (nlp.z_ub.size()) eqp.z_ub.head(n) = qp.z_ub;
      eqp.z_lb.tail(2 * me).setZero();
      sol = qp_solver.solve(eqp);
      ++res.qp_count;
      sol.z.conservativeResize(n);
    }
    const VectorXd d = sol.z.head(n);
    if (!d.allFinite()) break;

    // Penalty weight tracks the multipliers.
    double ymax = 0.0;
    for (int i = 0; i < sol.y.size(); ++i) ymax = std::max(ymax, std::abs(sol.y[i]));
    nu = std::max(nu, 2.0 * ymax + 1.0);

    const double phi0 = merit(nlp, r, ce, ci, nu);
    double dphi = (Jr.transpose() * r).dot(d);
    for (int i = 0; i < ce.size(); ++i) dphi -= nu * std::abs(ce[i]);
    if (ci.size()) {
      for (int i = 0; i < ci.size(); ++i) {
        if (nlp.in_ub.size()) dphi -= nu * std::max(0.0, ci[i] - nlp.in_ub[i]);
        if (nlp.in_lb.size()) dphi -= nu * std::max(0.0, nlp.in_lb[i] - ci[i]);
      }
    }

    double alpha = 1.0;
    bool accepted = false;
    VectorXd z_try, r_try, ce_try, ci_try;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      z_try = z + alpha * d;
      r_try = eval_r(z_try);
      ce_try = eval_ce(z_try);
      ci_try = eval_ci(z_try);
      const double phi1 = merit(nlp, r_try, ce_try, ci_try, nu);
      if (phi1 <= phi0 + 1e-4 * alpha * std::min(dphi, 0.0) + 1e-14 * std::abs(phi0)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }

    const double step = alpha * d.lpNorm<Eigen::Infinity>();
    res.step_norms.push_back(step);
    z = z_try;
    r = r_try;
    ce = ce_try;
    ci = ci_try;
    const double m_now = merit(nlp, r, ce, ci, nu);
    if (m_now <= best_merit + 1e-12) {
      best_merit = m_now;
      res.z = z;
      res.cost = 0.5 * r.squaredNorm();
      res.constraint_violation = violation(nlp, ce, ci);
    }
    if (step <= options.step_tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.step_norms.empty() && res.step_norms.back() <= options.step_tol) res.converged = true;
  return res;
}

}  // namespace vfmpc
