#include "vfmpc/baselines.hpp"

#include <chrono>

namespace vfmpc {

WbWeights WbWeights::planar_defaults(int n_j) {
  WbWeights w;
  w.Q1.resize(3 + n_j);
  w.Q1 << 100, 100, 150, VectorXd::Constant(n_j, 50.0);
  w.Q2 = VectorXd::Constant(n_j, 0.001);
  w.Q3 = VectorXd::Constant(4, 0.0001);
  w.Q4.resize(3 + n_j);
  w.Q4 << 1, 1, 1, VectorXd::Constant(n_j, 1.0);
  return w;
}

KdWeights KdWeights::planar_defaults(int n_j) {
  KdWeights w;
  w.R1 = Vector3d(10, 10, 20);
  w.R2_q.resize(3 + n_j);
  w.R2_q << 100, 100, 150, VectorXd::Constant(n_j, 50.0);
  w.R2_qd.resize(3 + n_j);
  w.R2_qd << 1, 1, 1, VectorXd::Constant(n_j, 1.0);
  w.R2_f = VectorXd::Constant(4, 1e-5);
  return w;
}

namespace {

// Shared planar transcription helpers. Reduced coordinates are
// (x, z, pitch, joints); contact forces are (fx, fz) per foot.
struct PlanarCtx {
  const RobotModel* model;
  int na = 0, nj = 0, h = 0;
  std::vector<int> block_of;  // column -> dt block index
  int n_blocks = 0;

  VectorXd lift_q(const VectorXd& q_red) const {
    VectorXd q = VectorXd::Zero(model->n_q());
    q[0] = q_red[0];
    q[2] = q_red[1];
    q[4] = q_red[2];
    for (int j = 0; j < nj; ++j) q[6 + j] = q_red[3 + j];
    return q;
  }
  VectorXd reduce_q(const VectorXd& q_full) const {
    VectorXd q(na);
    q[0] = q_full[0];
    q[1] = q_full[2];
    q[2] = q_full[4];
    for (int j = 0; j < nj; ++j) q[3 + j] = q_full[6 + j];
    return q;
  }
};

PlanarCtx make_ctx(const RobotModel& model, const ContactSchedule& schedule, const DtMode& dt_mode) {
  PlanarCtx ctx;
  ctx.model = &model;
  ctx.nj = model.n_j();
  ctx.na = 3 + ctx.nj;
  ctx.h = schedule.h;
  ctx.block_of.resize(ctx.h);
  int maxb = 0;
  for (int k = 0; k < ctx.h; ++k) {
    ctx.block_of[k] = (schedule.elapsed + k) / schedule.h_swing;
    maxb = std::max(maxb, ctx.block_of[k]);
  }
  ctx.n_blocks = maxb + 1;
  VFMPC_CHECK(static_cast<int>(dt_mode.block_dt.size()) >= ctx.n_blocks,
              "dt mode: not enough block durations for the horizon");
  return ctx;
}

// Contact Jacobian x/z rows over reduced coordinates.
Eigen::Matrix<double, 2, Eigen::Dynamic> contact_rows_red(const PlanarCtx& ctx, const VectorXd& q_full,
                                                          int contact) {
  const MatrixXd J = contact_jacobian(*ctx.model, q_full, contact);
  Eigen::Matrix<double, 2, Eigen::Dynamic> out(2, ctx.na);
  auto fill = [&](int row, int full_row) {
    out(row, 0) = J(full_row, 0);
    out(row, 1) = J(full_row, 2);
    out(row, 2) = J(full_row, 4);
    for (int j = 0; j < ctx.nj; ++j) out(row, 3 + j) = J(full_row, 6 + j);
  };
  fill(0, 0);
  fill(1, 2);
  return out;
}

double dyn_residual_of(const PlanarCtx& ctx, const std::vector<VectorXd>& q,
                       const std::vector<VectorXd>& qd, const std::vector<VectorXd>& tau,
                       const std::vector<std::array<Vector3d, 2>>& lambda,
                       const std::vector<double>& dt_cols) {
  double worst = 0.0;
  for (int k = 0; k < ctx.h; ++k) {
    const VectorXd q_full = ctx.lift_q(q[k]);
    const VectorXd qd_full = ctx.lift_q(qd[k]);
    const DynamicsTerms terms = dynamics_terms(*ctx.model, q_full, qd_full);
    VectorXd force = terms.S * tau[k] - terms.C;
    for (int i = 0; i < 2; ++i) {
      const auto J = contact_rows_red(ctx, q_full, i);
      force += J.transpose() * Eigen::Vector2d(lambda[k][i].x(), lambda[k][i].z());
    }
    const VectorXd qdd = (qd[k + 1] - qd[k]) / dt_cols[k];
    worst = std::max(worst, (terms.M * qdd - force).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace

BaselineResult solve_wb_mpc(const RobotModel& model, const GenCoordState& state,
                            const ReferenceBundle& refs, const ContactSchedule& schedule,
                            const WbWeights& weights, const DtMode& dt_mode,
                            const WrenchBounds& bounds, const VectorXd* z_warm, int max_sqp_iter) {
  const auto t0 = std::chrono::steady_clock::now();
  VFMPC_CHECK(model.planar, "solve_wb_mpc: planar model required");
  PlanarCtx ctx = make_ctx(model, schedule, dt_mode);
  const int na = ctx.na, nj = ctx.nj, h = ctx.h;
  const int n_state = 2 * na * h;
  const int n_ctrl = (nj + 4) * h;
  const int n = n_state + n_ctrl + (dt_mode.optimize ? ctx.n_blocks : 0);

  auto q_off = [&](int k) { return 2 * na * (k - 1); };          // k = 1..h
  auto qd_off = [&](int k) { return 2 * na * (k - 1) + na; };
  auto tau_off = [&](int k) { return n_state + (nj + 4) * k; };  // k = 0..h-1
  auto lam_off = [&](int k) { return n_state + (nj + 4) * k + nj; };
  auto dt_of = [&](const VectorXd& z, int k) {
    return dt_mode.optimize ? z[n_state + n_ctrl + ctx.block_of[k]]
                            : dt_mode.block_dt[ctx.block_of[k]];
  };

  const VectorXd q0 = ctx.reduce_q(state.q);
  const VectorXd qd0 = ctx.reduce_q(state.qd);

  // One-step semi-implicit Euler map.
  auto step = [&](const VectorXd& qk, const VectorXd& qdk, const VectorXd& tauk,
                  const Eigen::Vector4d& lamk, double dt, VectorXd* qn, VectorXd* qdn) {
    const VectorXd q_full = ctx.lift_q(qk);
    const VectorXd qd_full = ctx.lift_q(qdk);
    const DynamicsTerms terms = dynamics_terms(model, q_full, qd_full);
    VectorXd force = terms.S * tauk - terms.C;
    for (int i = 0; i < 2; ++i) {
      const auto J = contact_rows_red(ctx, q_full, i);
      force += J.transpose() * Eigen::Vector2d(lamk[2 * i], lamk[2 * i + 1]);
    }
    const VectorXd qdd = terms.M.ldlt().solve(force);
    *qdn = qdk + dt * qdd;
    *qn = qk + dt * (*qdn);
  };

  // Count contact-velocity rows.
  std::vector<std::pair<int, int>> contact_cols;  // (k, foot) with stance at k
  for (int k = 0; k < h; ++k)
    for (int i = 0; i < 2; ++i)
      if (schedule.in_stance(i, k)) contact_cols.push_back({k, i});
  const int m_eq = 2 * na * h + 2 * static_cast<int>(contact_cols.size());

  NlpProblem nlp;
  nlp.n = n;

  nlp.c_eq = [&, q0, qd0](const VectorXd& z) {
    VectorXd c(m_eq);
    int r = 0;
    VectorXd qn(na), qdn(na);
    for (int k = 0; k < h; ++k) {
      const VectorXd qk = k == 0 ? q0 : z.segment(q_off(k), na);
      const VectorXd qdk = k == 0 ? qd0 : z.segment(qd_off(k), na);
      step(qk, qdk, z.segment(tau_off(k), nj), z.segment<4>(lam_off(k)), dt_of(z, k), &qn, &qdn);
      c.segment(r, na) = z.segment(q_off(k + 1), na) - qn;
      c.segment(r + na, na) = z.segment(qd_off(k + 1), na) - qdn;
      r += 2 * na;
    }
    for (const auto& [k, foot] : contact_cols) {
      const VectorXd q_full = ctx.lift_q(z.segment(q_off(k + 1), na));
      const auto J = contact_rows_red(ctx, q_full, foot);
      c.segment<2>(r) = J * z.segment(qd_off(k + 1), na);
      r += 2;
    }
    return c;
  };

  nlp.c_eq_jac = [&, q0, qd0](const VectorXd& z) {
    MatrixXd Jc = MatrixXd::Zero(m_eq, n);
    const double eps = 1e-6;
    VectorXd qn(na), qdn(na), qp(na), qdp(na), qm(na), qdm(na);
    int r = 0;
    for (int k = 0; k < h; ++k) {
      VectorXd qk = k == 0 ? q0 : z.segment(q_off(k), na);
      VectorXd qdk = k == 0 ? qd0 : z.segment(qd_off(k), na);
      const VectorXd tauk = z.segment(tau_off(k), nj);
      const Eigen::Vector4d lamk = z.segment<4>(lam_off(k));
      const double dt = dt_of(z, k);
      // Identity on the next state.
      Jc.block(r, q_off(k + 1), na, na).setIdentity();
      Jc.block(r + na, qd_off(k + 1), na, na).setIdentity();
      // FD w.r.t. the current state (skipped for k = 0: fixed).
      if (k > 0) {
        for (int d = 0; d < 2 * na; ++d) {
          VectorXd zq = qk, zqd = qdk;
          double* tgt = d < na ? &zq[d] : &zqd[d - na];
          const double hstep = eps * std::max(1.0, std::abs(*tgt));
          *tgt += hstep;
          step(zq, zqd, tauk, lamk, dt, &qp, &qdp);
          *tgt -= 2 * hstep;
          step(zq, zqd, tauk, lamk, dt, &qm, &qdm);
          const int col = d < na ? q_off(k) + d : qd_off(k) + (d - na);
          Jc.block(r, col, na, 1) = -(qp - qm) / (2 * hstep);
          Jc.block(r + na, col, na, 1) = -(qdp - qdm) / (2 * hstep);
        }
      }
      // Controls enter linearly through the dynamics.
      const VectorXd q_full = ctx.lift_q(qk);
      const VectorXd qd_full = ctx.lift_q(qdk);
      const DynamicsTerms terms = dynamics_terms(model, q_full, qd_full);
      const MatrixXd Minv_S = terms.M.ldlt().solve(terms.S);
      Jc.block(r + na, tau_off(k), na, nj) = -dt * Minv_S;
      Jc.block(r, tau_off(k), na, nj) = -dt * dt * Minv_S;
      for (int i = 0; i < 2; ++i) {
        const auto J = contact_rows_red(ctx, q_full, i);
        const MatrixXd Minv_Jt = terms.M.ldlt().solve(MatrixXd(J.transpose()));
        Jc.block(r + na, lam_off(k) + 2 * i, na, 2) = -dt * Minv_Jt;
        Jc.block(r, lam_off(k) + 2 * i, na, 2) = -dt * dt * Minv_Jt;
      }
      if (dt_mode.optimize) {
        step(qk, qdk, tauk, lamk, dt, &qn, &qdn);
        VectorXd qn2(na), qdn2(na);
        step(qk, qdk, tauk, lamk, dt + eps, &qn2, &qdn2);
        Jc.block(r, n_state + n_ctrl + ctx.block_of[k], na, 1) = -(qn2 - qn) / eps;
        Jc.block(r + na, n_state + n_ctrl + ctx.block_of[k], na, 1) = -(qdn2 - qdn) / eps;
      }
      r += 2 * na;
    }
    for (const auto& [k, foot] : contact_cols) {
      const VectorXd qk1 = z.segment(q_off(k + 1), na);
      const VectorXd qdk1 = z.segment(qd_off(k + 1), na);
      const VectorXd q_full = ctx.lift_q(qk1);
      const auto J = contact_rows_red(ctx, q_full, foot);
      Jc.block(r, qd_off(k + 1), 2, na) = J;
      const double eps_q = 1e-6;
      for (int d = 0; d < na; ++d) {
        VectorXd qp2 = qk1;
        qp2[d] += eps_q;
        const auto Jp = contact_rows_red(ctx, ctx.lift_q(qp2), foot);
        Jc.block(r, q_off(k + 1) + d, 2, 1) = (Jp - J) * qdk1 / eps_q;
      }
      r += 2;
    }
    return Jc;
  };

  // Friction pyramid on stance forces.
  const int m_in = 2 * static_cast<int>(contact_cols.size());
  nlp.c_in = [&](const VectorXd& z) {
    VectorXd c(m_in);
    int r = 0;
    for (const auto& [k, foot] : contact_cols) {
      const double fx = z[lam_off(k) + 2 * foot];
      const double fz = z[lam_off(k) + 2 * foot + 1];
      c[r++] = fx - bounds.mu_box() * fz;
      c[r++] = -fx - bounds.mu_box() * fz;
    }
    return c;
  };
  nlp.c_in_jac = [&](const VectorXd& z) {
    (void)z;
    MatrixXd J = MatrixXd::Zero(m_in, n);
    int r = 0;
    for (const auto& [k, foot] : contact_cols) {
      J(r, lam_off(k) + 2 * foot) = 1.0;
      J(r, lam_off(k) + 2 * foot + 1) = -bounds.mu_box();
      ++r;
      J(r, lam_off(k) + 2 * foot) = -1.0;
      J(r, lam_off(k) + 2 * foot + 1) = -bounds.mu_box();
      ++r;
    }
    return J;
  };
  nlp.in_lb = VectorXd::Constant(m_in, -1e30);
  nlp.in_ub = VectorXd::Zero(m_in);

  // Tracking residual (Eq.-style quadratic objective as least squares).
  const int nr = (2 * na + nj + 4) * h;
  VectorXd sq1 = weights.Q1.cwiseSqrt(), sq2 = weights.Q2.cwiseSqrt(), sq3 = weights.Q3.cwiseSqrt(),
           sq4 = weights.Q4.cwiseSqrt();
  std::vector<VectorXd> q_ref_red(h + 1);
  for (int k = 0; k <= h; ++k) q_ref_red[k] = ctx.reduce_q(refs.q_ref[k]);
  nlp.residual = [&, sq1, sq2, sq3, sq4, q_ref_red](const VectorXd& z) {
    VectorXd res(nr);
    int r = 0;
    for (int k = 1; k <= h; ++k) {
      res.segment(r, na) = sq1.cwiseProduct(z.segment(q_off(k), na) - q_ref_red[k]);
      res.segment(r + na, na) = sq4.cwiseProduct(z.segment(qd_off(k), na));
      r += 2 * na;
    }
    for (int k = 0; k < h; ++k) {
      res.segment(r, nj) = sq2.cwiseProduct(z.segment(tau_off(k), nj));
      res.segment(r + nj, 4) = sq3.cwiseProduct(z.segment<4>(lam_off(k)));
      r += nj + 4;
    }
    return res;
  };
  nlp.residual_jac = [&, sq1, sq2, sq3, sq4](const VectorXd& z) {
    (void)z;
    MatrixXd J = MatrixXd::Zero(nr, n);
    int r = 0;
    for (int k = 1; k <= h; ++k) {
      for (int d = 0; d < na; ++d) {
        J(r + d, q_off(k) + d) = sq1[d];
        J(r + na + d, qd_off(k) + d) = sq4[d];
      }
      r += 2 * na;
    }
    for (int k = 0; k < h; ++k) {
      for (int d = 0; d < nj; ++d) J(r + d, tau_off(k) + d) = sq2[d];
      for (int d = 0; d < 4; ++d) J(r + nj + d, lam_off(k) + d) = sq3[d];
      r += nj + 4;
    }
    return J;
  };

  // Variable bounds: joint limits, torque limits, gated forces, dt range.
  nlp.z_lb = VectorXd::Constant(n, -1e30);
  nlp.z_ub = VectorXd::Constant(n, 1e30);
  for (int k = 1; k <= h; ++k) {
    for (int j = 0; j < nj; ++j) {
      nlp.z_lb[q_off(k) + 3 + j] = model.joints[j].q_min - 0.5;
      nlp.z_ub[q_off(k) + 3 + j] = model.joints[j].q_max + 0.5;
    }
  }
  for (int k = 0; k < h; ++k) {
    for (int j = 0; j < nj; ++j) {
      nlp.z_lb[tau_off(k) + j] = -model.joints[j].tau_max;
      nlp.z_ub[tau_off(k) + j] = model.joints[j].tau_max;
    }
    for (int i = 0; i < 2; ++i) {
      const bool st = schedule.in_stance(i, k);
      nlp.z_lb[lam_off(k) + 2 * i] = st ? -bounds.mu_box() * bounds.f_max : 0.0;
      nlp.z_ub[lam_off(k) + 2 * i] = st ? bounds.mu_box() * bounds.f_max : 0.0;
      nlp.z_lb[lam_off(k) + 2 * i + 1] = 0.0;
      nlp.z_ub[lam_off(k) + 2 * i + 1] = st ? bounds.f_max : 0.0;
    }
  }
  if (dt_mode.optimize) {
    for (int b = 0; b < ctx.n_blocks; ++b) {
      nlp.z_lb[n_state + n_ctrl + b] = dt_mode.dt_min;
      nlp.z_ub[n_state + n_ctrl + b] = dt_mode.dt_max;
    }
  }

  // Initial guess: references with gravity-split forces, or the warm start.
  VectorXd z0 = VectorXd::Zero(n);
  if (z_warm && z_warm->size() == n) {
    z0 = *z_warm;
  } else {
    for (int k = 1; k <= h; ++k) {
      z0.segment(q_off(k), na) = q_ref_red[k];
      z0.segment(qd_off(k), na) = ctx.reduce_q(refs.qd_ref[k]);
    }
    for (int k = 0; k < h; ++k) {
      const int sc = schedule.stance_count(k);
      for (int i = 0; i < 2; ++i)
        if (schedule.in_stance(i, k))
          z0[lam_off(k) + 2 * i + 1] = model.total_mass() * kGravity / std::max(1, sc);
    }
    if (dt_mode.optimize)
      for (int b = 0; b < ctx.n_blocks; ++b)
        z0[n_state + n_ctrl + b] = dt_mode.block_dt[std::min<size_t>(b, dt_mode.block_dt.size() - 1)];
  }

  SqpOptions opts;
  opts.max_iter = max_sqp_iter;
  opts.step_tol = 1e-5;
  opts.qp.eps_abs = 1e-7;
  opts.qp.eps_rel = 1e-7;
  opts.qp.max_iter = 2000;
  const SqpResult sqp = solve_sqp(nlp, z0, opts);

  BaselineResult out;
  out.z = sqp.z;
  out.iterations = sqp.iterations;
  out.qp_count = sqp.qp_count;
  out.converged = sqp.converged;
  out.flagged = !sqp.converged || sqp.constraint_violation > 1e-5;
  out.q.resize(h + 1);
  out.qd.resize(h + 1);
  out.q[0] = q0;
  out.qd[0] = qd0;
  for (int k = 1; k <= h; ++k) {
    out.q[k] = sqp.z.segment(q_off(k), na);
    out.qd[k] = sqp.z.segment(qd_off(k), na);
  }
  out.tau_j.resize(h);
  out.lambda.assign(h, {Vector3d::Zero(), Vector3d::Zero()});
  out.dt_cols.resize(h);
  for (int k = 0; k < h; ++k) {
    out.tau_j[k] = sqp.z.segment(tau_off(k), nj);
    for (int i = 0; i < 2; ++i)
      out.lambda[k][i] = Vector3d(sqp.z[lam_off(k) + 2 * i], 0.0, sqp.z[lam_off(k) + 2 * i + 1]);
    out.dt_cols[k] = dt_of(sqp.z, k);
  }
  out.dyn_residual = dyn_residual_of(ctx, out.q, out.qd, out.tau_j, out.lambda, out.dt_cols);
  out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

BaselineResult solve_explicit_kd(const RobotModel& model, const GenCoordState& state,
                                 const ReferenceBundle& refs, const ContactSchedule& schedule,
                                 const KdWeights& weights, const DtMode& dt_mode,
                                 const WrenchBounds& bounds, const VectorXd* z_warm,
                                 int max_sqp_iter) {
  const auto t0 = std::chrono::steady_clock::now();
  VFMPC_CHECK(model.planar, "solve_explicit_kd: planar model required");
  PlanarCtx ctx = make_ctx(model, schedule, dt_mode);
  const int na = ctx.na, h = ctx.h;
  const int n_state = 2 * na * h;
  const int n_ctrl = 4 * h;
  const int n = n_state + n_ctrl + (dt_mode.optimize ? ctx.n_blocks : 0);

  auto q_off = [&](int k) { return 2 * na * (k - 1); };
  auto qd_off = [&](int k) { return 2 * na * (k - 1) + na; };
  auto lam_off = [&](int k) { return n_state + 4 * k; };
  auto dt_of = [&](const VectorXd& z, int k) {
    return dt_mode.optimize ? z[n_state + n_ctrl + ctx.block_of[k]]
                            : dt_mode.block_dt[ctx.block_of[k]];
  };

  const VectorXd q0 = ctx.reduce_q(state.q);
  const VectorXd qd0 = ctx.reduce_q(state.qd);
  const double mass = model.total_mass();

  // Planar momentum (l_x, l_z, k_y) via the configuration-dependent map.
  auto momentum = [&](const VectorXd& q_red, const VectorXd& qd_red) {
    const auto cq = centroidal_momentum(model, ctx.lift_q(q_red), ctx.lift_q(qd_red));
    return Vector3d(cq.h[0], cq.h[2], cq.h[4]);
  };
  auto cd_rate = [&](const VectorXd& q_red, const Eigen::Vector4d& lam) {
    const VectorXd q_full = ctx.lift_q(q_red);
    const FrameSet fs = forward_kinematics(model, q_full);
    const Vector3d p_c = com_position(model, q_full);
    Vector3d ldot(0, 0, -mass * kGravity), kdot = Vector3d::Zero();
    for (int i = 0; i < 2; ++i) {
      const Vector3d f(lam[2 * i], 0, lam[2 * i + 1]);
      ldot += f;
      kdot += (fs.contact[i] - p_c).cross(f);
    }
    return Vector3d(ldot.x(), ldot.z(), kdot.y());
  };

  std::vector<std::pair<int, int>> contact_cols;
  for (int k = 0; k < h; ++k)
    for (int i = 0; i < 2; ++i)
      if (schedule.in_stance(i, k)) contact_cols.push_back({k, i});
  const int m_eq = (na + 3) * h + 2 * static_cast<int>(contact_cols.size());

  NlpProblem nlp;
  nlp.n = n;
  nlp.c_eq = [&, q0, qd0](const VectorXd& z) {
    VectorXd c(m_eq);
    int r = 0;
    for (int k = 0; k < h; ++k) {
      const VectorXd qk = k == 0 ? q0 : z.segment(q_off(k), na);
      const VectorXd qdk = k == 0 ? qd0 : z.segment(qd_off(k), na);
      const VectorXd qk1 = z.segment(q_off(k + 1), na);
      const VectorXd qdk1 = z.segment(qd_off(k + 1), na);
      const double dt = dt_of(z, k);
      c.segment(r, na) = qk1 - qk - dt * qdk1;
      c.segment<3>(r + na) = momentum(qk1, qdk1) - momentum(qk, qdk) - dt * cd_rate(qk, z.segment<4>(lam_off(k)));
      r += na + 3;
    }
    for (const auto& [k, foot] : contact_cols) {
      const auto J = contact_rows_red(ctx, ctx.lift_q(z.segment(q_off(k + 1), na)), foot);
      c.segment<2>(r) = J * z.segment(qd_off(k + 1), na);
      r += 2;
    }
    return c;
  };

  nlp.c_in = [&](const VectorXd& z) {
    VectorXd c(2 * contact_cols.size());
    int r = 0;
    for (const auto& [k, foot] : contact_cols) {
      const double fx = z[lam_off(k) + 2 * foot];
      const double fz = z[lam_off(k) + 2 * foot + 1];
      c[r++] = fx - bounds.mu_box() * fz;
      c[r++] = -fx - bounds.mu_box() * fz;
    }
    return c;
  };
  nlp.in_lb = VectorXd::Constant(2 * contact_cols.size(), -1e30);
  nlp.in_ub = VectorXd::Zero(2 * contact_cols.size());

  const int nr = (2 * na + 4 + 3) * h;
  const Vector3d sr1 = weights.R1.cwiseSqrt();
  const VectorXd sq = weights.R2_q.cwiseSqrt(), sqd = weights.R2_qd.cwiseSqrt(),
                 sf = weights.R2_f.cwiseSqrt();
  std::vector<VectorXd> q_ref_red(h + 1);
  std::vector<Vector3d> h_ref_pl(h + 1);
  for (int k = 0; k <= h; ++k) {
    q_ref_red[k] = ctx.reduce_q(refs.q_ref[k]);
    h_ref_pl[k] = Vector3d(refs.h_ref[k][0], refs.h_ref[k][2], refs.h_ref[k][4]);
  }
  nlp.residual = [&, sr1, sq, sqd, sf, q_ref_red, h_ref_pl](const VectorXd& z) {
    VectorXd res(nr);
    int r = 0;
    for (int k = 1; k <= h; ++k) {
      res.segment<3>(r) =
          sr1.cwiseProduct(momentum(z.segment(q_off(k), na), z.segment(qd_off(k), na)) - h_ref_pl[k]);
      res.segment(r + 3, na) = sq.cwiseProduct(z.segment(q_off(k), na) - q_ref_red[k]);
      res.segment(r + 3 + na, na) = sqd.cwiseProduct(z.segment(qd_off(k), na));
      r += 3 + 2 * na;
    }
    for (int k = 0; k < h; ++k) {
      res.segment<4>(r) = sf.cwiseProduct(z.segment<4>(lam_off(k)));
      r += 4;
    }
    return res;
  };

  nlp.z_lb = VectorXd::Constant(n, -1e30);
  nlp.z_ub = VectorXd::Constant(n, 1e30);
  for (int k = 1; k <= h; ++k)
    for (int j = 0; j < ctx.nj; ++j) {
      nlp.z_lb[q_off(k) + 3 + j] = model.joints[j].q_min - 0.5;
      nlp.z_ub[q_off(k) + 3 + j] = model.joints[j].q_max + 0.5;
    }
  for (int k = 0; k < h; ++k)
    for (int i = 0; i < 2; ++i) {
      const bool st = schedule.in_stance(i, k);
      nlp.z_lb[lam_off(k) + 2 * i] = st ? -bounds.mu_box() * bounds.f_max : 0.0;
      nlp.z_ub[lam_off(k) + 2 * i] = st ? bounds.mu_box() * bounds.f_max : 0.0;
      nlp.z_lb[lam_off(k) + 2 * i + 1] = 0.0;
      nlp.z_ub[lam_off(k) + 2 * i + 1] = st ? bounds.f_max : 0.0;
    }
  if (dt_mode.optimize)
    for (int b = 0; b < ctx.n_blocks; ++b) {
      nlp.z_lb[n_state + n_ctrl + b] = dt_mode.dt_min;
      nlp.z_ub[n_state + n_ctrl + b] = dt_mode.dt_max;
    }

  VectorXd z0 = VectorXd::Zero(n);
  if (z_warm && z_warm->size() == n) {
    z0 = *z_warm;
  } else {
    for (int k = 1; k <= h; ++k) {
      z0.segment(q_off(k), na) = q_ref_red[k];
      z0.segment(qd_off(k), na) = ctx.reduce_q(refs.qd_ref[k]);
    }
    for (int k = 0; k < h; ++k) {
      const int sc = schedule.stance_count(k);
      for (int i = 0; i < 2; ++i)
        if (schedule.in_stance(i, k)) z0[lam_off(k) + 2 * i + 1] = mass * kGravity / std::max(1, sc);
    }
    if (dt_mode.optimize)
      for (int b = 0; b < ctx.n_blocks; ++b)
        z0[n_state + n_ctrl + b] = dt_mode.block_dt[std::min<size_t>(b, dt_mode.block_dt.size() - 1)];
  }

  SqpOptions opts;
  opts.max_iter = max_sqp_iter;
  opts.step_tol = 1e-5;
  opts.fd_step = 1e-6;
  opts.qp.eps_abs = 1e-7;
  opts.qp.eps_rel = 1e-7;
  opts.qp.max_iter = 2000;
  const SqpResult sqp = solve_sqp(nlp, z0, opts);

  BaselineResult out;
  out.z = sqp.z;
  out.iterations = sqp.iterations;
  out.qp_count = sqp.qp_count;
  out.converged = sqp.converged;
  out.flagged = !sqp.converged || sqp.constraint_violation > 1e-5;
  out.q.resize(h + 1);
  out.qd.resize(h + 1);
  out.q[0] = q0;
  out.qd[0] = qd0;
  for (int k = 1; k <= h; ++k) {
    out.q[k] = sqp.z.segment(q_off(k), na);
    out.qd[k] = sqp.z.segment(qd_off(k), na);
  }
  out.lambda.assign(h, {Vector3d::Zero(), Vector3d::Zero()});
  out.dt_cols.resize(h);
  for (int k = 0; k < h; ++k) {
    for (int i = 0; i < 2; ++i)
      out.lambda[k][i] = Vector3d(sqp.z[lam_off(k) + 2 * i], 0.0, sqp.z[lam_off(k) + 2 * i + 1]);
    out.dt_cols[k] = dt_of(sqp.z, k);
  }
  out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace vfmpc
