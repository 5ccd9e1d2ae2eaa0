#include <doctest.h>

#include "test_helpers.hpp"
#include "vfmpc/cmpc.hpp"

using namespace vfmpc;
using vfmpc::testing::biped2d;

namespace {

MpcConfig planar_config() {
  MpcConfig c;
  c.mass = 10.0;
  c.com_height = 0.38;
  c.reach_z_nominal = 0.40;
  c.weights.L1_h << 20, 0, 20, 0, 20, 0;
  c.weights.L1_H << 200, 0, 200, 0, 300, 0;
  c.weights.L1_pf << 0.01, 0, 0.01;
  c.weights.L1_pc << 100, 0, 300;
  c.weights.L2_f << 1e-4, 0, 1e-4;
  c.weights.L2_tau << 1e-3, 1e-3, 1e-3;
  c.bounds.f_max = 250.0;
  return c;
}

ContactConfig random_prev(Rng& rng) {
  ContactConfig cc;
  cc.mass = 10.0;
  for (int i = 0; i < 2; ++i) {
    cc.f[i] = Vector3d(rng.uniform(-40, 40), rng.uniform(-20, 20), rng.uniform(20, 150));
    cc.tau[i] = Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    cc.p_f[i] = Vector3d(rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(-0.05, 0.05));
  }
  cc.p_c = Vector3d(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.3, 0.5));
  return cc;
}

// Symmetric stand: straight legs, feet together under the hip. The planar
// knee-back legs are not mirror images under sign flips, so this is the
// posture with the CoM centered between the feet.
GenCoordState standing_state(const RobotModel& m) {
  GenCoordState s(m.n_q());
  s.q[2] = 0.44;
  return s;
}

// Walking posture: bent knees, feet mirrored fore/aft of the hip and
// resting exactly on the ground.
GenCoordState walking_state(const RobotModel& m) {
  GenCoordState s(m.n_q());
  s.q[6] = 0.15;
  s.q[7] = -0.35;
  s.q[8] = 0.20;
  s.q[9] = -0.35;
  s.q[2] = 0.22 * (std::cos(0.15) + std::cos(0.15 - 0.35));  // feet at z = 0
  return s;
}

MpcConfig standing_config() {
  MpcConfig c = planar_config();
  c.com_height = 0.4208;  // straight-leg CoM height of the stand posture
  c.reach_z_nominal = 0.42;
  return c;
}

ContactConfig apply_delta(const ContactConfig& u0, const VectorXd& d, double scale) {
  ContactConfig u = u0;
  for (int i = 0; i < 2; ++i) {
    u.f[i] += scale * d.segment<3>(3 * i);
    u.tau[i] += scale * d.segment<3>(6 + 3 * i);
    u.p_f[i] += scale * d.segment<3>(12 + 3 * i);
  }
  u.p_c += scale * d.segment<3>(18);
  return u;
}

}  // namespace

TEST_CASE("linearization point consistency: du = 0 reproduces the exact step") {
  Rng rng(61);
  for (int t = 0; t < 100; ++t) {
    const ContactConfig cc = random_prev(rng);
    CentroidalState x;
    for (int i = 0; i < 6; ++i) {
      x.H[i] = rng.normal();
      x.h[i] = rng.normal();
    }
    const double dt = rng.uniform(0.03, 0.06);
    const LinearizedStep ls = linearize_dynamics(x, cc, dt);
    VectorXd xv(12);
    xv << x.H, x.h;
    const VectorXd lin = ls.A * xv + ls.C;
    const CentroidalState exact = cd_step_exact(x, cc, dt);
    VectorXd ev(12);
    ev << exact.H, exact.h;
    CHECK((lin - ev).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + ev.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("zero previous forces kill the foot-position moment columns") {
  ContactConfig cc;
  cc.mass = 10.0;
  cc.p_f[0] = Vector3d(0.1, 0, 0);
  cc.p_f[1] = Vector3d(-0.1, 0, 0);
  const LinearizedStep ls = linearize_dynamics(CentroidalState{}, cc, 0.05);
  CHECK(ls.B.block<3, 6>(9, 12).norm() == 0.0);
  CHECK(ls.B.block<3, 3>(9, 18).norm() == 0.0);
}

TEST_CASE("second-order remainder: exact-vs-linear error scales as ||delta||^2") {
  Rng rng(62);
  for (int t = 0; t < 100; ++t) {
    const ContactConfig u0 = random_prev(rng);
    CentroidalState x;
    for (int i = 0; i < 6; ++i) x.h[i] = rng.normal();
    const double dt = 0.05;
    const LinearizedStep ls = linearize_dynamics(x, u0, dt);
    VectorXd dir = rng.normal_vec(21);
    dir /= dir.lpNorm<Eigen::Infinity>();
    VectorXd xv(12);
    xv << x.H, x.h;
    std::vector<double> ratio;
    for (double s : {1e-2, 1e-3, 1e-4}) {
      const VectorXd lin = ls.A * xv + ls.B * (s * dir) + ls.C;
      const CentroidalState ex = cd_step_exact(x, apply_delta(u0, dir, s), dt);
      VectorXd ev(12);
      ev << ex.H, ex.h;
      ratio.push_back((lin - ev).lpNorm<Eigen::Infinity>() / (s * s));
    }
    const double lo = *std::min_element(ratio.begin(), ratio.end());
    const double hi = *std::max_element(ratio.begin(), ratio.end());
    if (hi > 1e-9) CHECK(hi / std::max(lo, 1e-300) <= 3.0);
  }
}

TEST_CASE("foot bounds") {
  const MpcConfig cfg = planar_config();
  const ContactSchedule sch = ContactSchedule::walking(0);
  SUBCASE("flat unbounded terrain returns the kinematic reach box") {
    const Terrain flat = Terrain::flat();
    const Vector3d p_c(0.2, 0, 0.40);
    const FootBounds fb = foot_bounds(flat, p_c, sch, 1, Vector3d(0.3, 0, 0), cfg);
    CHECK(!fb.violation);
    CHECK(fb.lo.x() == doctest::Approx(0.2 - cfg.reach_x));
    CHECK(fb.hi.x() == doctest::Approx(0.2 + cfg.reach_x));
  }
  SUBCASE("gap ahead splits the interval by target side") {
    Terrain t;
    t.patches.push_back({-1e9, 1.0, 0.0, AllowedFeet::Both});
    t.patches.push_back({1.0, 1.1, -0.3, AllowedFeet::None});
    t.patches.push_back({1.1, 1e9, 0.0, AllowedFeet::Both});
    const Vector3d p_c(0.9, 0, 0.40);
    // Interval-intersection oracle: allowed pieces inside the reach box.
    const FootBounds before = foot_bounds(t, p_c, sch, 1, Vector3d(0.95, 0, 0), cfg);
    CHECK(before.hi.x() <= 1.0 + 1e-12);
    const FootBounds after = foot_bounds(t, p_c, sch, 1, Vector3d(1.15, 0, 0), cfg);
    CHECK(after.lo.x() >= 1.1 - 1e-12);
  }
  SUBCASE("per-foot patches exclude the other foot") {
    Terrain t;
    t.patches.push_back({-1e9, 0.5, 0.0, AllowedFeet::Both});
    t.patches.push_back({0.5, 0.8, 0.0, AllowedFeet::Left});
    t.patches.push_back({0.8, 1e9, 0.0, AllowedFeet::Both});
    const Vector3d p_c(0.55, 0, 0.40);
    const FootBounds left = foot_bounds(t, p_c, sch, 0, Vector3d(0.6, 0, 0), cfg);
    CHECK(left.lo.x() <= 0.55);
    CHECK(left.hi.x() >= 0.75);
    const FootBounds right = foot_bounds(t, p_c, sch, 1, Vector3d(0.6, 0, 0), cfg);
    // The right foot cannot use [0.5, 0.8): its interval ends at 0.5 or
    // starts at 0.8.
    CHECK((right.hi.x() <= 0.5 + 1e-12 || right.lo.x() >= 0.8 - 1e-12));
  }
  SUBCASE("empty intersection flags a violation and returns the widest box") {
    Terrain t;
    t.patches.push_back({-1e9, 1e9, 0.0, AllowedFeet::None});
    const FootBounds fb = foot_bounds(t, Vector3d(0, 0, 0.4), sch, 0, Vector3d::Zero(), cfg);
    CHECK(fb.violation);
    CHECK(fb.hi.x() - fb.lo.x() == doctest::Approx(2 * cfg.reach_x));
  }
}

TEST_CASE("window structure of the walking schedule") {
  const ContactSchedule sch = ContactSchedule::walking(0);
  const WindowSet ws = build_windows(sch);
  // Left stance [0,5) + synthetic tail; right lands at column 5.
  REQUIRE(ws.count() == 3);
  int n_next = 0;
  for (const auto& w : ws.win) n_next += w.next_touchdown ? 1 : 0;
  CHECK(n_next == 1);
  for (const auto& w : ws.win)
    if (w.next_touchdown) {
      CHECK(w.foot == 1);
      CHECK(w.start == 5);
    }
  // Per-step input dimension before stance sharing: 2*(3+3+3) + 3 = 21.
  const int per_step = 2 * (3 + 3 + 3) + 3;
  CHECK(per_step == 21);
  CHECK(per_step * sch.h == 210);
}

TEST_CASE("standing equilibrium subproblem returns a near-zero direction") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = standing_config();
  const GenCoordState s = standing_state(m);
  const Terrain flat = Terrain::flat();
  const ContactSchedule sch = ContactSchedule::standing();
  SeqCmpc mpc(m, cfg);

  // Build everything by hand to exercise assemble_subproblem directly.
  const auto refs = build_reference(m, s, Command{0.0}, sch, 0.05, flat, cfg);
  const CentroidalState x0 = joints_to_momenta(m, s.q, s.qd);
  const Vector3d p_c = com_position(m, s.q);
  const FrameSet fs = forward_kinematics(m, s.q);
  std::array<Vector3d, 2> feet{fs.contact[0], fs.contact[1]};
  const WindowSet ws = build_windows(sch);

  MpcTotals u;
  u.f.assign(10, {Vector3d(0, 0, 49.05), Vector3d(0, 0, 49.05)});
  u.tau.assign(10, {Vector3d::Zero(), Vector3d::Zero()});
  u.p_c.assign(11, p_c);
  u.p_f_window = {feet[0], feet[1]};  // coincident under the hip

  // The reference CoM must match the current state for a true fixed point.
  auto refs2 = refs;
  for (auto& p : refs2.p_c_ref) p = p_c;
  std::vector<std::array<Vector3d, 2>> pf(11, {feet[0], feet[1]});
  refs2 = update_reference_from_solution(refs2, pf, refs2.p_c_ref, refs2.dt, m);

  const std::vector<FootBounds> fb(build_windows(sch).count());
  const Subproblem sp = assemble_subproblem(refs2, x0, p_c, 0.05, u, sch, fb, cfg, true, feet);
  const QpSolution sol = solve_qp(sp.qp);
  REQUIRE(sol.status == QpStatus::Solved);
  // Standing at the reference: gravity is already balanced by the warm
  // start, so the direction stays small (sub-Newton forces, sub-mm feet).
  CHECK(sol.z.lpNorm<Eigen::Infinity>() <= 1.0);
}

TEST_CASE("swing gating pins the swing wrench to zero") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = planar_config();
  const GenCoordState s = walking_state(m);
  const Terrain flat = Terrain::flat();
  const ContactSchedule sch = ContactSchedule::walking(0);
  SeqCmpc mpc(m, cfg);
  const MpcSolveResult res = mpc.sequential_solve(s, Command{0.0}, flat, sch, nullptr);
  for (int k = 0; k < sch.h; ++k)
    for (int i = 0; i < 2; ++i)
      if (!sch.in_stance(i, k)) {
        CHECK(res.u.f[k][i].lpNorm<Eigen::Infinity>() <= 1e-10);
        CHECK(res.u.tau[k][i].lpNorm<Eigen::Infinity>() <= 1e-10);
      }
}

TEST_CASE("standing solve converges immediately to the weight split") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = standing_config();
  const GenCoordState s = standing_state(m);
  const Terrain flat = Terrain::flat();
  SeqCmpc mpc(m, cfg);
  int gn_calls = 0;
  GaitNetFn gn = [&](const VectorXd&, const VectorXd&, const std::array<Vector3d, 2>&) {
    ++gn_calls;
    return 0.055;
  };
  const MpcSolveResult res =
      mpc.sequential_solve(s, Command{0.0}, flat, ContactSchedule::standing(), gn);
  CHECK(res.diag.converged);
  CHECK(res.diag.iterations <= 2);
  CHECK(res.dt_final >= cfg.dt_min);
  CHECK(res.dt_final <= cfg.dt_max);
  // Static equilibrium oracle: m g / 2 on each stance foot.
  for (int k = 0; k < 10; ++k) {
    CHECK(res.u.f[k][0].z() == doctest::Approx(49.05).epsilon(0.05));
    CHECK(res.u.f[k][1].z() == doctest::Approx(49.05).epsilon(0.05));
  }
}

TEST_CASE("walking solve converges and satisfies every constraint class") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = planar_config();
  GenCoordState s = walking_state(m);
  s.qd[0] = 0.4;  // already moving forward
  const Terrain flat = Terrain::flat();
  SeqCmpc mpc(m, cfg);
  const MpcSolveResult res =
      mpc.sequential_solve(s, Command{0.5}, flat, ContactSchedule::walking(0), nullptr);
  CHECK(res.diag.converged);
  CHECK(res.diag.iterations <= 50);
  const SolutionAudit audit = audit_solution(res, cfg, true);
  CHECK(audit.friction_slack_min >= -1e-8);
  CHECK(audit.swing_wrench_max <= 1e-10);
  CHECK(audit.stance_drift_max <= 1e-8);
  CHECK(audit.bound_margin_min >= -1e-8);
  // dt clip contract even in fixed-dt mode.
  CHECK(res.dt_final >= cfg.dt_min);
  CHECK(res.dt_final <= cfg.dt_max);
}

TEST_CASE("adversarial alternating predictor triggers the nominal-dt fallback") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = planar_config();
  GenCoordState s = walking_state(m);
  s.qd[0] = 0.3;
  const Terrain flat = Terrain::flat();
  SeqCmpc mpc(m, cfg);
  int call = 0;
  GaitNetFn flipper = [&](const VectorXd&, const VectorXd&, const std::array<Vector3d, 2>&) {
    return (call++ % 2 == 0) ? 0.03 : 0.06;
  };
  const MpcSolveResult res =
      mpc.sequential_solve(s, Command{0.5}, flat, ContactSchedule::walking(0), flipper);
  CHECK(res.diag.fallback);
  CHECK(res.diag.converged);
  CHECK(res.dt_final == doctest::Approx(cfg.dt_nominal));
}

TEST_CASE("mid-step solve: warm-started fixed point and dt bound sweep") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = planar_config();
  GenCoordState s = walking_state(m);
  s.qd[0] = 0.3;
  const Terrain flat = Terrain::flat();
  SeqCmpc mpc(m, cfg);
  const ContactSchedule sch = ContactSchedule::walking(0);

  SUBCASE("unchanged state after convergence re-solves in one iteration") {
    const MpcSolveResult first = mpc.sequential_solve(s, Command{0.5}, flat, sch, nullptr);
    REQUIRE(first.diag.converged);
    const MpcSolveResult again =
        mpc.mid_step_solve(s, Command{0.5}, flat, sch, first.dt_final, &first);
    CHECK(again.diag.converged);
    CHECK(again.diag.iterations == 1);
  }

  SUBCASE("solves at both clip extremes") {
    for (double dtf : {0.03, 0.06}) {
      const MpcSolveResult res = mpc.mid_step_solve(s, Command{0.5}, flat, sch, dtf, nullptr);
      CHECK(res.diag.converged);
      CHECK(res.dt_final == doctest::Approx(dtf));
    }
  }
}

TEST_CASE("sequential loop honors the step-norm monotonicity-or-fallback invariant") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = planar_config();
  GenCoordState s = walking_state(m);
  s.qd[0] = 0.5;
  const Terrain flat = Terrain::flat();
  SeqCmpc mpc(m, cfg);
  const MpcSolveResult res =
      mpc.sequential_solve(s, Command{0.5}, flat, ContactSchedule::walking(0), nullptr);
  const auto& ns = res.diag.step_norms;
  bool monotone = true;
  for (size_t i = 2; i + 1 < ns.size(); ++i)
    if (ns[i + 1] > ns[i] * 1.05) monotone = false;
  CHECK((monotone || res.diag.fallback));
}
