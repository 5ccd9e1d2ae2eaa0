#include "vfmpc/cmpc.hpp"

#include <chrono>

#include "vfmpc/ik.hpp"

namespace vfmpc {

namespace {

double inf_norm_of(const std::vector<std::array<Vector3d, 2>>& v) {
  double n = 0.0;
  for (const auto& s : v)
    for (const auto& x : s) n = std::max(n, x.lpNorm<Eigen::Infinity>());
  return n;
}

}  // namespace

double SearchDirections::inf_norm_positions() const {
  double n = inf_norm_of(dp_f);
  for (const auto& x : dp_c) n = std::max(n, x.lpNorm<Eigen::Infinity>());
  return n;
}
double SearchDirections::inf_norm_forces() const { return inf_norm_of(df); }
double SearchDirections::inf_norm_moments() const { return inf_norm_of(dtau); }

WindowSet build_windows(const ContactSchedule& schedule) {
  const int h = schedule.h;
  WindowSet ws;
  for (int foot = 0; foot < 2; ++foot) {
    int k = 0;
    while (k < h) {
      if (schedule.in_stance(foot, k)) {
        WindowSet::Window w;
        w.foot = foot;
        w.start = k;
        while (k < h && schedule.in_stance(foot, k)) ++k;
        w.end = k;
        w.current_stance = (w.start == 0);
        ws.win.push_back(w);
      } else {
        ++k;
      }
    }
    // A swing still airborne at the end of the horizon lands beyond it;
    // give it a synthetic landing window so the column map is total.
    if (!schedule.in_stance(foot, h - 1)) {
      WindowSet::Window w;
      w.foot = foot;
      w.start = h;
      w.end = h;
      w.synthetic = true;
      ws.win.push_back(w);
    }
  }
  // The next touchdown: earliest window starting strictly in the future.
  int best = -1, best_start = 1 << 20;
  for (size_t i = 0; i < ws.win.size(); ++i) {
    if (ws.win[i].start > 0 && ws.win[i].start < best_start) {
      best_start = ws.win[i].start;
      best = static_cast<int>(i);
    }
  }
  if (best >= 0) ws.win[best].next_touchdown = true;

  for (int foot = 0; foot < 2; ++foot) {
    ws.col_map[foot].assign(h + 1, -1);
    for (int k = 0; k <= h; ++k) {
      const int kc = std::min(k, h - 1);
      if (schedule.in_stance(foot, kc)) {
        for (size_t i = 0; i < ws.win.size(); ++i)
          if (ws.win[i].foot == foot && kc >= ws.win[i].start && kc < ws.win[i].end)
            ws.col_map[foot][k] = static_cast<int>(i);
      } else {
        // Upcoming window of this foot (including synthetic tails).
        int cand = -1, cand_start = 1 << 20;
        for (size_t i = 0; i < ws.win.size(); ++i)
          if (ws.win[i].foot == foot && ws.win[i].end > kc && ws.win[i].start > kc &&
              ws.win[i].start < cand_start) {
            cand_start = ws.win[i].start;
            cand = static_cast<int>(i);
          }
        if (cand < 0) {
          for (size_t i = 0; i < ws.win.size(); ++i)
            if (ws.win[i].foot == foot && ws.win[i].synthetic) cand = static_cast<int>(i);
        }
        ws.col_map[foot][k] = cand;
      }
    }
    for (int k = 0; k <= h; ++k)
      VFMPC_CHECK(ws.col_map[foot][k] >= 0, "window map: unmapped column");
  }
  return ws;
}

LinearizedStep linearize_dynamics(const CentroidalState& x_k, const ContactConfig& u_prev_k,
                                  double dt) {
  (void)x_k;  // A and C depend on the linearization point, not the state
  LinearizedStep ls;
  ls.A = MatrixXd::Identity(12, 12);
  ls.A.block<6, 6>(0, 6) = dt * Matrix6d::Identity();
  ls.B = MatrixXd::Zero(12, 21);
  ls.C = VectorXd::Zero(12);

  Vector3d l_const = Vector3d(0, 0, -u_prev_k.mass * u_prev_k.gravity);
  Vector3d k_const = Vector3d::Zero();
  Matrix3d sum_fx = Matrix3d::Zero();
  for (int i = 0; i < 2; ++i) {
    const Vector3d r = u_prev_k.p_f[i] - u_prev_k.p_c;
    ls.B.block<3, 3>(6, 3 * i) = dt * Matrix3d::Identity();     // df -> l
    ls.B.block<3, 3>(9, 3 * i) = dt * skew(r);                  // df -> k
    ls.B.block<3, 3>(9, 6 + 3 * i) = dt * Matrix3d::Identity(); // dtau -> k
    ls.B.block<3, 3>(9, 12 + 3 * i) = -dt * skew(u_prev_k.f[i]); // dp_f -> k
    sum_fx += skew(u_prev_k.f[i]);
    l_const += u_prev_k.f[i];
    k_const += r.cross(u_prev_k.f[i]) + u_prev_k.tau[i];
  }
  ls.B.block<3, 3>(9, 18) = dt * sum_fx;  // dp_c -> k
  ls.C.segment<3>(6) = dt * l_const;
  ls.C.segment<3>(9) = dt * k_const;
  return ls;
}

FootBounds foot_bounds(const Terrain& terrain, const Vector3d& p_c, const ContactSchedule& schedule,
                       int leg, const Vector3d& target_hint, const MpcConfig& config) {
  (void)schedule;
  FootBounds fb;
  const double hip_x = p_c.x();
  const double x_lo = hip_x - config.reach_x;
  const double x_hi = hip_x + config.reach_x;
  const double z_nom = p_c.z() - config.reach_z_nominal;
  fb.lo = Vector3d(x_lo, 0.0, z_nom - config.reach_z_band);
  fb.hi = Vector3d(x_hi, 0.0, z_nom + config.reach_z_band);

  const auto intervals = terrain.allowed_intervals(x_lo, x_hi, leg);
  if (intervals.empty()) {
    fb.violation = true;
    return fb;  // widest kinematic box, flagged
  }
  // Pick the interval holding the intended target, else the nearest one.
  const double tx = target_hint.x();
  size_t pick = 0;
  double best = 1e30;
  for (size_t i = 0; i < intervals.size(); ++i) {
    double d = 0.0;
    if (tx < intervals[i].first) d = intervals[i].first - tx;
    else if (tx > intervals[i].second) d = tx - intervals[i].second;
    if (d < best) {
      best = d;
      pick = i;
    }
  }
  fb.lo.x() = std::max(fb.lo.x(), intervals[pick].first);
  fb.hi.x() = std::min(fb.hi.x(), intervals[pick].second);
  if (fb.lo.x() > fb.hi.x()) {
    fb.lo.x() = x_lo;
    fb.hi.x() = x_hi;
    fb.violation = true;
  }
  // Landing height must sit on this patch.
  const double mid = 0.5 * (fb.lo.x() + fb.hi.x());
  const double hz = terrain.height_at(clamp(tx, fb.lo.x(), fb.hi.x()));
  (void)mid;
  fb.lo.z() = std::max(fb.lo.z(), hz - 1e-3);
  fb.hi.z() = std::min(fb.hi.z(), hz + 1e-3);
  if (fb.lo.z() > fb.hi.z()) {
    fb.lo.z() = hz - 1e-3;
    fb.hi.z() = hz + 1e-3;
    fb.violation = true;
  }
  return fb;
}

Subproblem assemble_subproblem(const ReferenceBundle& refs, const CentroidalState& x0,
                               const Vector3d& p_c_meas, double dt, const MpcTotals& u_prev,
                               const ContactSchedule& schedule,
                               const std::vector<FootBounds>& window_bounds, const MpcConfig& config,
                               bool planar, const std::array<Vector3d, 2>& foot_meas) {
  const int h = schedule.h;
  Subproblem sp;
  sp.windows = build_windows(schedule);
  const WindowSet& ws = sp.windows;
  sp.n_wrench = 12 * h;
  sp.n_feet = 3 * ws.count();
  sp.n_pc = 3 * (h + 1);
  const int n = sp.n_wrench + sp.n_feet + sp.n_pc;
  const double mass = config.mass;

  // --- Roll out the linearized dynamics to express x_1..x_h in du ---
  std::vector<MatrixXd> E(h + 1, MatrixXd::Zero(12, n));
  std::vector<VectorXd> e(h + 1, VectorXd::Zero(12));
  e[0].head<6>() = x0.H;
  e[0].tail<6>() = x0.h;
  for (int k = 0; k < h; ++k) {
    ContactConfig cc;
    cc.mass = mass;
    cc.p_c = u_prev.p_c[k];
    for (int i = 0; i < 2; ++i) {
      cc.f[i] = u_prev.f[k][i];
      cc.tau[i] = u_prev.tau[k][i];
      cc.p_f[i] = u_prev.p_f_window[ws.col_map[i][k]];
    }
    const LinearizedStep ls = linearize_dynamics(CentroidalState{}, cc, dt);
    // Scatter the 21 per-step B columns into the global layout.
    MatrixXd Bg = MatrixXd::Zero(12, n);
    for (int i = 0; i < 2; ++i) {
      Bg.middleCols(sp.wrench_col(k, i, false), 3) = ls.B.middleCols(3 * i, 3);
      Bg.middleCols(sp.wrench_col(k, i, true), 3) = ls.B.middleCols(6 + 3 * i, 3);
      Bg.middleCols(sp.window_col(ws.col_map[i][k]), 3) += ls.B.middleCols(12 + 3 * i, 3);
    }
    Bg.middleCols(sp.pc_col(k), 3) = ls.B.middleCols(18, 3);
    E[k + 1] = ls.A * E[k] + Bg;
    e[k + 1] = ls.A * e[k] + ls.C;
  }

  // --- Cost ---
  MatrixXd P = MatrixXd::Zero(n, n);
  VectorXd g = VectorXd::Zero(n);
  for (int k = 1; k <= h; ++k) {
    // Momentum and pose tracking on the rolled-out states.
    const auto& Ek = E[k];
    Vector6d errH = e[k].head<6>() - refs.H_ref[k];
    Vector6d errh = e[k].tail<6>() - refs.h_ref[k];
    const MatrixXd GH = Ek.topRows(6);
    const MatrixXd Gh = Ek.bottomRows(6);
    P.noalias() += GH.transpose() * config.weights.L1_H.asDiagonal() * GH;
    g.noalias() += GH.transpose() * (config.weights.L1_H.asDiagonal() * errH);
    P.noalias() += Gh.transpose() * config.weights.L1_h.asDiagonal() * Gh;
    g.noalias() += Gh.transpose() * (config.weights.L1_h.asDiagonal() * errh);
  }
  for (int k = 1; k <= h; ++k) {
    for (int a = 0; a < 3; ++a) {
      const double w = config.weights.L1_pc[a];
      if (w <= 0) continue;
      const int c = sp.pc_col(k) + a;
      P(c, c) += w;
      g[c] += w * (u_prev.p_c[k][a] - refs.p_c_ref[k][a]);
    }
  }
  for (int k = 0; k < h; ++k) {
    for (int i = 0; i < 2; ++i) {
      const int wcol = sp.window_col(ws.col_map[i][k]);
      for (int a = 0; a < 3; ++a) {
        const double w = config.weights.L1_pf[a];
        if (w <= 0) continue;
        P(wcol + a, wcol + a) += w;
        g[wcol + a] += w * (u_prev.p_f_window[ws.col_map[i][k]][a] - refs.p_f_ref[k][i][a]);
      }
      for (int a = 0; a < 3; ++a) {
        const double wf = config.weights.L2_f[a];
        const int fc = sp.wrench_col(k, i, false) + a;
        P(fc, fc) += wf;
        g[fc] += wf * u_prev.f[k][i][a];
        const double wt = config.weights.L2_tau[a];
        const int tc = sp.wrench_col(k, i, true) + a;
        P(tc, tc) += wt;
        g[tc] += wt * u_prev.tau[k][i][a];
      }
    }
  }
  // Proximal damping on the wrench directions (see MpcConfig::prox_wrench).
  for (int c = 0; c < sp.n_wrench; ++c) P(c, c) += config.prox_wrench;
  // Unweighted directions are the pinned (out-of-plane, gated) variables;
  // give them real curvature so the solver stays well conditioned. Their
  // values are fixed by equality bounds, so this adds no bias.
  for (int i = 0; i < n; ++i)
    if (P(i, i) < 1e-8) P(i, i) = 1e-4;

  // --- Equalities: CoM position chained to the linear momentum ---
  MatrixXd A_eq = MatrixXd::Zero(3 * h, n);
  VectorXd b_eq = VectorXd::Zero(3 * h);
  for (int k = 0; k < h; ++k) {
    for (int a = 0; a < 3; ++a) {
      const int r = 3 * k + a;
      A_eq(r, sp.pc_col(k + 1) + a) += 1.0;
      A_eq(r, sp.pc_col(k) + a) -= 1.0;
      A_eq.row(r).noalias() -= (dt / mass) * E[k].row(6 + a);
      b_eq[r] = -(u_prev.p_c[k + 1][a] - u_prev.p_c[k][a]) + (dt / mass) * e[k][6 + a];
    }
  }

  // --- Boxes: gating, pins, foot bounds ---
  VectorXd lb = VectorXd::Constant(n, -1e30), ub = VectorXd::Constant(n, 1e30);
  auto tighten = [&](int c, double lo, double hi) {
    lb[c] = std::max(lb[c], lo);
    ub[c] = std::min(ub[c], hi);
  };
  const WrenchBounds& wb = config.bounds;
  for (int k = 0; k < h; ++k) {
    for (int i = 0; i < 2; ++i) {
      const int sig = schedule.sigma(i, k);
      const int fc = sp.wrench_col(k, i, false);
      const int tc = sp.wrench_col(k, i, true);
      // Contact-switching saturation of the total wrench.
      tighten(fc + 0, -sig * wb.mu_box() * wb.f_max - u_prev.f[k][i][0],
              sig * wb.mu_box() * wb.f_max - u_prev.f[k][i][0]);
      tighten(fc + 1, -sig * wb.mu_box() * wb.f_max - u_prev.f[k][i][1],
              sig * wb.mu_box() * wb.f_max - u_prev.f[k][i][1]);
      tighten(fc + 2, sig * wb.f_min - u_prev.f[k][i][2], sig * wb.f_max - u_prev.f[k][i][2]);
      const double ty = planar ? 0.0 : (sig ? 1e30 : 0.0);  // spatial stance: coupled rows below
      tighten(tc + 1, -ty - u_prev.tau[k][i][1], ty - u_prev.tau[k][i][1]);
      tighten(tc + 0, sig * -wb.tau_max_x - u_prev.tau[k][i][0], sig * wb.tau_max_x - u_prev.tau[k][i][0]);
      tighten(tc + 2, sig * -wb.tau_max_z - u_prev.tau[k][i][2], sig * wb.tau_max_z - u_prev.tau[k][i][2]);
      if (planar) tighten(fc + 1, -u_prev.f[k][i][1], -u_prev.f[k][i][1]);  // f_y pinned
    }
  }
  // Planar pins and anchors on windows.
  VFMPC_CHECK(static_cast<int>(window_bounds.size()) == ws.count(),
              "assemble_subproblem: window bound count mismatch");
  for (int w = 0; w < ws.count(); ++w) {
    const int c = sp.window_col(w);
    if (planar) tighten(c + 1, -u_prev.p_f_window[w][1], -u_prev.p_f_window[w][1]);
    if (ws.win[w].current_stance) {
      const Vector3d pin = foot_meas[ws.win[w].foot] - u_prev.p_f_window[w];
      for (int a = 0; a < 3; ++a) tighten(c + a, pin[a], pin[a]);
    } else {
      const FootBounds& fb = window_bounds[w];
      tighten(c + 0, fb.lo.x() - u_prev.p_f_window[w][0], fb.hi.x() - u_prev.p_f_window[w][0]);
      tighten(c + 2, fb.lo.z() - u_prev.p_f_window[w][2], fb.hi.z() - u_prev.p_f_window[w][2]);
    }
  }
  // CoM pins: column 0 to the measurement, y for planar.
  for (int a = 0; a < 3; ++a)
    tighten(sp.pc_col(0) + a, p_c_meas[a] - u_prev.p_c[0][a], p_c_meas[a] - u_prev.p_c[0][a]);
  if (planar)
    for (int k = 0; k <= h; ++k) tighten(sp.pc_col(k) + 1, -u_prev.p_c[k][1], -u_prev.p_c[k][1]);

  // --- Inequalities: friction pyramid (+ line-foot moment coupling) ---
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rlb, rub;
  auto add_row = [&](const Eigen::RowVectorXd& r, double lo, double hi) {
    rows.push_back(r);
    rlb.push_back(lo);
    rub.push_back(hi);
  };
  const double mu_box = wb.mu_box();
  for (int k = 0; k < h; ++k) {
    for (int i = 0; i < 2; ++i) {
      if (!schedule.in_stance(i, k)) continue;
      const int fc = sp.wrench_col(k, i, false);
      const int axes = planar ? 1 : 2;
      for (int a = 0; a < axes; ++a) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
        r[fc + a] = 1.0;
        r[fc + 2] = -mu_box;
        add_row(r, -1e30, -(u_prev.f[k][i][a] - mu_box * u_prev.f[k][i][2]));
        Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(n);
        r2[fc + a] = -1.0;
        r2[fc + 2] = -mu_box;
        add_row(r2, -1e30, u_prev.f[k][i][a] + mu_box * u_prev.f[k][i][2]);
      }
      if (!planar && wb.foot_half_length > 0.0) {
        const int tc = sp.wrench_col(k, i, true);
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
        r[tc + 1] = 1.0;
        r[fc + 2] = -wb.foot_half_length;
        add_row(r, -1e30,
                -(u_prev.tau[k][i][1] - wb.foot_half_length * u_prev.f[k][i][2]));
        Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(n);
        r2[tc + 1] = -1.0;
        r2[fc + 2] = -wb.foot_half_length;
        add_row(r2, -1e30, u_prev.tau[k][i][1] + wb.foot_half_length * u_prev.f[k][i][2]);
      }
    }
  }

  sp.qp.P = P;
  sp.qp.g = g;
  sp.qp.A_eq = A_eq;
  sp.qp.b_eq = b_eq;
  if (!rows.empty()) {
    sp.qp.A_in.resize(static_cast<int>(rows.size()), n);
    sp.qp.in_lb.resize(static_cast<int>(rows.size()));
    sp.qp.in_ub.resize(static_cast<int>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      sp.qp.A_in.row(static_cast<int>(r)) = rows[r];
      sp.qp.in_lb[static_cast<int>(r)] = rlb[r];
      sp.qp.in_ub[static_cast<int>(r)] = rub[r];
    }
  }
  sp.qp.z_lb = lb;
  sp.qp.z_ub = ub;
  return sp;
}

SolutionAudit audit_solution(const MpcSolveResult& result, const MpcConfig& config, bool planar) {
  SolutionAudit a;
  const auto& sch = result.schedule;
  const double mu_box = config.bounds.mu_box();
  for (int k = 0; k < sch.h; ++k) {
    for (int i = 0; i < 2; ++i) {
      const Vector3d& f = result.u.f[k][i];
      const Vector3d& tau = result.u.tau[k][i];
      if (sch.in_stance(i, k)) {
        a.friction_slack_min = std::min(a.friction_slack_min, mu_box * f.z() - std::abs(f.x()));
        if (!planar)
          a.friction_slack_min = std::min(a.friction_slack_min, mu_box * f.z() - std::abs(f.y()));
      } else {
        a.swing_wrench_max = std::max({a.swing_wrench_max, f.lpNorm<Eigen::Infinity>(),
                                       tau.lpNorm<Eigen::Infinity>()});
      }
    }
  }
  const WindowSet ws = build_windows(sch);
  for (int w = 0; w < ws.count(); ++w) {
    // In-stance drift: every column of the window shares the value.
    for (int k = ws.win[w].start; k < ws.win[w].end; ++k) {
      const Vector3d d = result.p_f_cols[k][ws.win[w].foot] - result.u.p_f_window[w];
      a.stance_drift_max = std::max(a.stance_drift_max, d.lpNorm<Eigen::Infinity>());
    }
    if (ws.win[w].next_touchdown && result.bounds_active[ws.win[w].foot]) {
      const auto& fb = result.bounds_applied[ws.win[w].foot];
      const Vector3d& p = result.u.p_f_window[w];
      a.bound_margin_min = std::min({a.bound_margin_min, fb.hi.x() - p.x(), p.x() - fb.lo.x(),
                                     fb.hi.z() - p.z(), p.z() - fb.lo.z()});
    }
  }
  return a;
}

SeqCmpc::SeqCmpc(const RobotModel& model, const MpcConfig& config) : model_(model), config_(config) {
  QpSettings qs;
  qs.eps_abs = 1e-6;
  qs.eps_rel = 1e-6;
  qs.max_iter = 4000;
  solver_ = QpSolver(qs);  // the polish step supplies the final precision
}

MpcTotals SeqCmpc::initial_guess(const ContactSchedule& schedule, const WindowSet& windows,
                                 const ReferenceBundle& refs,
                                 const std::array<Vector3d, 2>& foot_meas) const {
  MpcTotals u;
  const int h = schedule.h;
  u.f.assign(h, {Vector3d::Zero(), Vector3d::Zero()});
  u.tau.assign(h, {Vector3d::Zero(), Vector3d::Zero()});
  for (int k = 0; k < h; ++k) {
    const int sc = schedule.stance_count(k);
    for (int i = 0; i < 2; ++i)
      if (schedule.in_stance(i, k))
        u.f[k][i] = Vector3d(0, 0, config_.mass * kGravity / std::max(1, sc));
  }
  u.p_c = refs.p_c_ref;
  u.p_f_window.resize(windows.count());
  for (int w = 0; w < windows.count(); ++w) {
    // Real windows start at the current foot positions; synthetic landing
    // windows (beyond the horizon) carry the nominal reference target and
    // stay pinned there.
    u.p_f_window[w] = windows.win[w].synthetic
                          ? refs.p_f_ref[schedule.h][windows.win[w].foot]
                          : foot_meas[windows.win[w].foot];
  }
  return u;
}

MpcSolveResult SeqCmpc::run_loop(const GenCoordState& state, const Command& command,
                                 const Terrain& terrain, const ContactSchedule& schedule, double dt0,
                                 const GaitNetFn& gaitnet, const MpcSolveResult* warm) {
  const auto t_start = std::chrono::steady_clock::now();
  const FrameSet fs = forward_kinematics(model_, state.q);
  std::array<Vector3d, 2> foot_meas;
  for (int i = 0; i < 2; ++i)
    foot_meas[i] = model_.planar ? fs.contact[i] : Vector3d(0.5 * (fs.contact[2 * i] + fs.contact[2 * i + 1]));
  const Vector3d p_c_meas = com_position(model_, state.q);
  const CentroidalState x0 = joints_to_momenta(model_, state.q, state.qd);

  // Reference refresh with a reach-clamped retry: bounds can be wider than
  // the leg, so targets get pulled back to the re-timed reference bases.
  auto refresh_refs = [&](const ReferenceBundle& in, std::vector<std::array<Vector3d, 2>> p_f_cols,
                          const std::vector<Vector3d>& p_c_sol, double dt_new) {
    try {
      return update_reference_from_solution(in, p_f_cols, p_c_sol, dt_new, model_);
    } catch (const IkOutOfReach&) {
      const double reach = model_.legs.l1 + model_.legs.l2;  // grazing extension is fine
      for (int k = 0; k <= schedule.h; ++k) {
        const Vector3d base =
            in.p_c_ref[0] + Vector3d(in.vx_cmd * k * dt_new, 0, 0) + in.base_offset;
        for (int i = 0; i < 2; ++i) {
          const Vector3d dvec = p_f_cols[k][i] - base;
          if (dvec.norm() > reach) p_f_cols[k][i] = base + dvec * (reach / dvec.norm());
        }
      }
      return update_reference_from_solution(in, p_f_cols, p_c_sol, dt_new, model_);
    }
  };

  ReferenceBundle refs;
  if (warm) {
    // Continue the sequential map: references consistent with the warm
    // totals at the frozen dt.
    refs = refresh_refs(warm->refs, warm->p_f_cols, warm->u.p_c, dt0);
  } else {
    refs = build_reference(model_, state, command, schedule, dt0, terrain, config_);
  }
  const WindowSet windows = build_windows(schedule);
  MpcTotals u = warm ? warm->u : initial_guess(schedule, windows, refs, foot_meas);
  VFMPC_CHECK(static_cast<int>(u.p_f_window.size()) == windows.count(),
              "warm start layout mismatch");

  MpcSolveResult res;
  res.schedule = schedule;
  double dt = dt0;
  res.diag.dt_history.push_back(dt);
  std::optional<QpWarmStart> qws;
  if (warm && warm->qp_warm.y.size() > 0) qws = warm->qp_warm;

  for (int j = 1; j <= config_.tols.j_max; ++j) {
    res.diag.iterations = j;
    // Window constraints: one-step-preview bounds on the next touchdown,
    // terrain z pins on later windows, nominal-target pins on synthetics.
    std::vector<FootBounds> wb(windows.count());
    for (int w = 0; w < windows.count(); ++w) {
      const auto& win = windows.win[w];
      if (win.current_stance) continue;  // pinned to the measurement inside
      const int foot = win.foot;
      const int col = std::min(win.start, schedule.h);
      if (win.synthetic) {
        wb[w].lo = u.p_f_window[w];
        wb[w].hi = u.p_f_window[w];
        continue;
      }
      if (win.next_touchdown) {
        wb[w] = foot_bounds(terrain, p_c_meas, schedule, foot, refs.p_f_ref[col][foot], config_);
        if (wb[w].violation) res.diag.bound_violation = true;
        res.bounds_active[foot] = true;
        res.bounds_applied[foot] = wb[w];
      } else {
        // Beyond the next step the preview interval is deactivated; only
        // the landing height stays tied to the terrain.
        const double hz = terrain.height_at(u.p_f_window[w].x());
        wb[w].lo.z() = hz - 1e-3;
        wb[w].hi.z() = hz + 1e-3;
      }
    }

    Subproblem sp = assemble_subproblem(refs, x0, p_c_meas, dt, u, schedule, wb, config_,
                                        model_.planar, foot_meas);
    QpSolution sol = solver_.solve(sp.qp, qws);
    ++res.diag.qp_count;
    if (sol.status == QpStatus::Infeasible) {
      // Retry once with the preview bounds opened to the kinematic box.
      for (int w = 0; w < windows.count(); ++w) {
        if (!windows.win[w].next_touchdown) continue;
        wb[w] = FootBounds{};
        const double hip_x = p_c_meas.x();
        wb[w].lo = Vector3d(hip_x - config_.reach_x, 0,
                            p_c_meas.z() - config_.reach_z_nominal - config_.reach_z_band);
        wb[w].hi = Vector3d(hip_x + config_.reach_x, 0,
                            p_c_meas.z() - config_.reach_z_nominal + config_.reach_z_band);
        wb[w].violation = true;
      }
      res.diag.bound_violation = true;
      sp = assemble_subproblem(refs, x0, p_c_meas, dt, u, schedule, wb, config_, model_.planar,
                               foot_meas);
      sol = solver_.solve(sp.qp);
      ++res.diag.qp_count;
      VFMPC_CHECK(sol.status != QpStatus::Infeasible,
                  "sequential solve: subproblem infeasible twice at iteration " + std::to_string(j));
    }
    qws = QpWarmStart{VectorXd::Zero(sol.z.size()), sol.y};
    res.qp_warm = *qws;

    // Accumulate the totals.
    SearchDirections d;
    d.df.resize(schedule.h);
    d.dtau.resize(schedule.h);
    d.dp_f.resize(schedule.h);
    d.dp_c.resize(schedule.h + 1);
    for (int k = 0; k < schedule.h; ++k) {
      for (int i = 0; i < 2; ++i) {
        d.df[k][i] = sol.z.segment<3>(sp.wrench_col(k, i, false));
        d.dtau[k][i] = sol.z.segment<3>(sp.wrench_col(k, i, true));
        d.dp_f[k][i] = sol.z.segment<3>(sp.window_col(windows.col_map[i][k]));
        u.f[k][i] += d.df[k][i];
        u.tau[k][i] += d.dtau[k][i];
      }
    }
    for (int k = 0; k <= schedule.h; ++k) {
      d.dp_c[k] = sol.z.segment<3>(sp.pc_col(k));
      u.p_c[k] += d.dp_c[k];
    }
    for (int w = 0; w < windows.count(); ++w)
      u.p_f_window[w] += sol.z.segment<3>(sp.window_col(w));

    // Snap the exactly-known equalities so solver dust never accumulates
    // across iterations: gated swing wrenches, out-of-plane components, the
    // measured anchors.
    for (int k = 0; k < schedule.h; ++k) {
      for (int i = 0; i < 2; ++i) {
        if (!schedule.in_stance(i, k)) {
          u.f[k][i].setZero();
          u.tau[k][i].setZero();
        } else if (model_.planar) {
          u.f[k][i][1] = 0.0;
          u.tau[k][i].setZero();
        }
      }
    }
    if (model_.planar) {
      for (auto& p : u.p_c) p[1] = 0.0;
      for (auto& p : u.p_f_window) p[1] = 0.0;
    }
    u.p_c[0] = p_c_meas;
    for (int w = 0; w < windows.count(); ++w)
      if (windows.win[w].current_stance) u.p_f_window[w] = foot_meas[windows.win[w].foot];

    const double n_pos = d.inf_norm_positions();
    const double n_f = d.inf_norm_forces();
    const double n_tau = d.inf_norm_moments();
    const double n_all = std::max({n_pos, n_f, n_tau});
    res.diag.step_norms.push_back(n_all);
    const bool converged = n_pos <= config_.tols.eta_pos && n_f <= config_.tols.eta_f &&
                           n_tau <= config_.tols.eta_tau;

    // Convergence monitor: no net step-norm decrease across a 3-iteration
    // window reverts the loop to nominal dt and pure sequential
    // convexification. The window tolerates single plateaus but catches
    // both stalls and predictor-driven oscillation.
    const auto& ns = res.diag.step_norms;
    if (ns.size() >= 4 && !res.diag.fallback && gaitnet &&
        n_all >= ns[ns.size() - 4] * (1.0 - 1e-12)) {
      res.diag.fallback = true;
      dt = config_.dt_nominal;
    }
    if (converged) {
      res.diag.converged = true;
      break;
    }

    // Predictor update (skipped under fallback or in fixed-dt mode).
    double dt_next = dt;
    if (gaitnet && !res.diag.fallback) {
      std::array<Vector3d, 2> p_next;
      for (int i = 0; i < 2; ++i) p_next[i] = u.p_f_window[windows.col_map[i][schedule.h]];
      dt_next = clamp(gaitnet(state.q, state.qd, p_next), config_.dt_min, config_.dt_max);
    }
    res.diag.dt_history.push_back(dt_next);

    // Reference refresh against this iteration's solution.
    std::vector<std::array<Vector3d, 2>> p_f_cols(schedule.h + 1);
    for (int k = 0; k <= schedule.h; ++k)
      for (int i = 0; i < 2; ++i) p_f_cols[k][i] = u.p_f_window[windows.col_map[i][k]];
    refs = refresh_refs(refs, p_f_cols, u.p_c, dt_next);
    dt = dt_next;
  }

  res.u = u;
  res.dt_final = dt;
  res.refs = refs;
  res.p_f_cols.resize(schedule.h + 1);
  for (int k = 0; k <= schedule.h; ++k)
    for (int i = 0; i < 2; ++i) res.p_f_cols[k][i] = u.p_f_window[windows.col_map[i][k]];
  for (int i = 0; i < 2; ++i) res.next_placement[i] = u.p_f_window[windows.col_map[i][schedule.h]];
  res.diag.solve_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

MpcSolveResult SeqCmpc::sequential_solve(const GenCoordState& state, const Command& command,
                                         const Terrain& terrain, const ContactSchedule& schedule,
                                         const GaitNetFn& gaitnet) {
  return run_loop(state, command, terrain, schedule, config_.dt_nominal, gaitnet, nullptr);
}

MpcSolveResult SeqCmpc::mid_step_solve(const GenCoordState& state, const Command& command,
                                       const Terrain& terrain, const ContactSchedule& schedule,
                                       double dt_fixed, const MpcSolveResult* warm) {
  return run_loop(state, command, terrain, schedule, dt_fixed, nullptr, warm);
}

}  // namespace vfmpc
