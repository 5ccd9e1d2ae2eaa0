#include <doctest.h>

#include "test_helpers.hpp"
#include "vfmpc/centroidal.hpp"
#include "vfmpc/ik.hpp"
#include "vfmpc/swing.hpp"

using namespace vfmpc;
using vfmpc::testing::biped2d;
using vfmpc::testing::random_state;

namespace {

MpcConfig planar_config() {
  MpcConfig c;
  c.mass = 10.0;
  c.com_height = 0.38;
  return c;
}

ContactConfig random_contact(Rng& rng) {
  ContactConfig c;
  c.mass = 10.0;
  for (int i = 0; i < 2; ++i) {
    c.f[i] = Vector3d(rng.uniform(-50, 50), 0, rng.uniform(0, 200));
    c.tau[i] = Vector3d(0, rng.uniform(-5, 5), 0);
    c.p_f[i] = Vector3d(rng.uniform(-0.3, 0.3), 0, 0);
  }
  c.p_c = Vector3d(rng.uniform(-0.1, 0.1), 0, rng.uniform(0.3, 0.5));
  return c;
}

}  // namespace

TEST_CASE("flight phase: momentum drops by m g dt, angular momentum constant") {
  CentroidalState x;
  x.h << 1.0, 0, 2.0, 0, 0.5, 0;
  ContactConfig c;
  c.mass = 10.0;
  const CentroidalState next = cd_step_exact(x, c, 0.05);
  CHECK((next.h.head<3>() - (x.h.head<3>() + Vector3d(0, 0, -4.905))).norm() <= 1e-14);
  CHECK((next.h.tail<3>() - x.h.tail<3>()).norm() == 0.0);
  CHECK((next.H - (x.H + 0.05 * x.h)).norm() == 0.0);
}

TEST_CASE("force through the CoM produces no moment") {
  CentroidalState x;
  ContactConfig c;
  c.mass = 10.0;
  c.p_c = Vector3d(0.1, 0, 0.4);
  c.p_f[0] = c.p_c;  // single contact acting through the CoM
  c.f[0] = Vector3d(30, 0, 120);
  const CentroidalState next = cd_step_exact(x, c, 0.05);
  CHECK(next.h.tail<3>().norm() == 0.0);
}

TEST_CASE("cd_step_exact matches an independent Euler step of the continuous law") {
  Rng rng(51);
  for (int t = 0; t < 100; ++t) {
    const ContactConfig c = random_contact(rng);
    CentroidalState x;
    for (int i = 0; i < 6; ++i) {
      x.H[i] = rng.normal();
      x.h[i] = rng.normal();
    }
    const double dt = rng.uniform(0.01, 0.08);
    const CentroidalState ours = cd_step_exact(x, c, dt);
    // Oracle written straight from the continuous rate equations.
    Vector3d ldot = c.f[0] + c.f[1] + Vector3d(0, 0, -c.mass * c.gravity);
    Vector3d kdot = (c.p_f[0] - c.p_c).cross(c.f[0]) + c.tau[0] +
                    (c.p_f[1] - c.p_c).cross(c.f[1]) + c.tau[1];
    CHECK((ours.h.head<3>() - (x.h.head<3>() + dt * ldot)).norm() <= 1e-13);
    CHECK((ours.h.tail<3>() - (x.h.tail<3>() + dt * kdot)).norm() <= 1e-13);
  }
}

TEST_CASE("pose integration: constant A_G case is exact") {
  // A single rigid body translating: A_G depends only on orientation, so a
  // pure translation keeps it constant and H_k = A_G q_k exactly.
  RobotModel single;
  single.name = "single";
  LinkSpec l;
  l.name = "body";
  l.mass = 2.0;
  l.com = Vector3d::Zero();
  l.inertia = Matrix3d::Identity() * 0.1;
  single.links.push_back(l);

  const double dt = 0.01;
  std::vector<VectorXd> q_traj, qd_traj;
  for (int k = 0; k < 40; ++k) {
    VectorXd q = VectorXd::Zero(6), qd = VectorXd::Zero(6);
    q.head<3>() = Vector3d(0.1 * k * dt, -0.2 * k * dt, 0.3 * k * dt);
    qd.head<3>() = Vector3d(0.1, -0.2, 0.3);
    q_traj.push_back(q);
    qd_traj.push_back(qd);
  }
  const auto H = centroidal_pose_integrate(q_traj, qd_traj, single, dt);
  for (size_t k = 0; k < q_traj.size(); ++k) {
    const auto cq = centroidal_momentum(single, q_traj[k], qd_traj[k]);
    CHECK((H[k] - cq.A_G * q_traj[k]).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("pose integration: zero motion keeps H constant") {
  const RobotModel m = biped2d();
  Rng rng(52);
  const GenCoordState s = random_state(m, rng, 0.0);
  std::vector<VectorXd> q_traj(10, s.q), qd_traj(10, VectorXd::Zero(m.n_q()));
  const auto H = centroidal_pose_integrate(q_traj, qd_traj, m, 0.02);
  for (size_t k = 1; k < H.size(); ++k) CHECK((H[k] - H[0]).norm() <= 1e-14);
}

TEST_CASE("pose integration converges first order against a fine-grid oracle") {
  // Pendulum-like joint trajectory with analytic rates.
  const RobotModel m = biped2d();
  auto q_of = [&](double t) {
    VectorXd q = VectorXd::Zero(m.n_q());
    q[0] = 0.2 * std::sin(1.3 * t);
    q[2] = 0.45 + 0.05 * std::cos(2.1 * t);
    q[4] = 0.3 * std::sin(1.7 * t);
    q[6] = 0.6 * std::sin(2.3 * t);
    q[7] = -0.8 + 0.4 * std::cos(1.9 * t);
    q[8] = -0.5 * std::sin(2.0 * t);
    q[9] = -0.7 + 0.3 * std::sin(2.7 * t);
    return q;
  };
  auto qd_of = [&](double t) {
    VectorXd qd = VectorXd::Zero(m.n_q());
    qd[0] = 0.2 * 1.3 * std::cos(1.3 * t);
    qd[2] = -0.05 * 2.1 * std::sin(2.1 * t);
    qd[4] = 0.3 * 1.7 * std::cos(1.7 * t);
    qd[6] = 0.6 * 2.3 * std::cos(2.3 * t);
    qd[7] = -0.4 * 1.9 * std::sin(1.9 * t);
    qd[8] = -0.5 * 2.0 * std::cos(2.0 * t);
    qd[9] = 0.3 * 2.7 * std::cos(2.7 * t);
    return qd;
  };
  const double T = 0.5;

  // Oracle: H(T) = H(0) + integral of h over [0, T] by fine trapezoid.
  auto h_of = [&](double t) { return centroidal_momentum(m, q_of(t), qd_of(t)).h; };
  const int fine = 4000;
  Vector6d integral = Vector6d::Zero();
  for (int i = 0; i < fine; ++i) {
    const double t0 = T * i / fine, t1 = T * (i + 1) / fine;
    integral += 0.5 * (h_of(t0) + h_of(t1)) * (T / fine);
  }
  const Vector6d H0 = centroidal_momentum(m, q_of(0), qd_of(0)).A_G * q_of(0);
  const Vector6d H_true = H0 + integral;

  auto coarse_err = [&](int steps) {
    const double dt = T / steps;
    std::vector<VectorXd> qs, qds;
    for (int k = 0; k <= steps; ++k) {
      qs.push_back(q_of(k * dt));
      qds.push_back(qd_of(k * dt));
    }
    const auto H = centroidal_pose_integrate(qs, qds, m, dt);
    return (H.back() - H_true).norm();
  };

  const double e1 = coarse_err(25);
  const double e2 = coarse_err(50);
  const double e3 = coarse_err(100);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("swing trajectory boundary and bump") {
  const Vector3d a(0.1, 0, 0.0), b(0.3, 0, 0.02);
  const auto s0 = swing_trajectory(a, b, 0.0, 0.06);
  const auto s1 = swing_trajectory(a, b, 1.0, 0.06);
  const auto sm = swing_trajectory(a, b, 0.5, 0.06);
  CHECK((s0.pos - a).norm() <= 1e-14);
  CHECK((s1.pos - b).norm() <= 1e-14);
  CHECK(s0.vel.norm() <= 1e-12);
  CHECK(s1.vel.norm() <= 1e-12);
  CHECK(sm.pos.z() == doctest::Approx(0.5 * (a.z() + b.z()) + 0.06).epsilon(1e-12));
}

TEST_CASE("reference construction") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = planar_config();
  const Terrain flat = Terrain::flat();

  // Standing state near nominal height.
  GenCoordState s(m.n_q());
  s.q[2] = 0.40;
  s.q[6] = 0.3;
  s.q[7] = -0.6;
  s.q[8] = -0.3;
  s.q[9] = -0.6;

  SUBCASE("zero command, standing: momenta references vanish, feet stationary") {
    const auto rb = build_reference(m, s, Command{0.0}, ContactSchedule::standing(), 0.05, flat, cfg);
    for (int k = 0; k <= 10; ++k) {
      CHECK(rb.h_ref[k].norm() <= 1e-10);
      CHECK((rb.p_f_ref[k][0] - rb.p_f_ref[0][0]).norm() <= 1e-14);
      CHECK((rb.p_f_ref[k][1] - rb.p_f_ref[0][1]).norm() <= 1e-14);
    }
  }

  SUBCASE("0.5 m/s command advances the CoM reference by 0.5 dt per step") {
    const auto rb = build_reference(m, s, Command{0.5}, ContactSchedule::walking(0), 0.05, flat, cfg);
    for (int k = 0; k < 10; ++k)
      CHECK(rb.p_c_ref[k + 1].x() - rb.p_c_ref[k].x() == doctest::Approx(0.025).epsilon(1e-12));
  }

  SUBCASE("stored h_ref is self-consistent with the joint references") {
    const auto rb = build_reference(m, s, Command{0.5}, ContactSchedule::walking(0), 0.05, flat, cfg);
    for (int k = 0; k <= 10; ++k) {
      const auto cq = centroidal_momentum(m, rb.q_ref[k], rb.qd_ref[k]);
      CHECK((cq.h - rb.h_ref[k]).norm() == 0.0);  // same evaluation path, bitwise
      CHECK((cq.A_G * rb.qd_ref[k] - rb.h_ref[k]).norm() <= 1e-10);
    }
  }

  SUBCASE("commanded velocity outside [-1,1] is rejected") {
    CHECK_THROWS_AS(build_reference(m, s, Command{1.5}, ContactSchedule::standing(), 0.05, flat, cfg),
                    Error);
  }
}

TEST_CASE("reference refresh from solutions") {
  const RobotModel m = biped2d();
  const MpcConfig cfg = planar_config();
  const Terrain flat = Terrain::flat();
  GenCoordState s(m.n_q());
  s.q[2] = 0.40;
  s.q[6] = 0.3;
  s.q[7] = -0.6;
  s.q[8] = -0.3;
  s.q[9] = -0.6;
  const auto rb = build_reference(m, s, Command{0.3}, ContactSchedule::walking(0), 0.05, flat, cfg);
  // Zero-command bundle: re-timing the ramp keeps every target in place,
  // isolating the pure dt effect on the interpolated velocities.
  const auto rb0 = build_reference(m, s, Command{0.0}, ContactSchedule::walking(0), 0.05, flat, cfg);

  SUBCASE("fixed point: reusing the stored trajectories is bitwise stable") {
    const auto rb2 = update_reference_from_solution(rb, rb.p_f_ref, rb.p_c_ref, rb.dt, m);
    for (int k = 0; k <= 10; ++k) {
      CHECK((rb2.q_ref[k] - rb.q_ref[k]).norm() == 0.0);
      CHECK((rb2.qd_ref[k] - rb.qd_ref[k]).norm() == 0.0);
      CHECK((rb2.h_ref[k] - rb.h_ref[k]).norm() == 0.0);
      CHECK((rb2.H_ref[k] - rb.H_ref[k]).norm() == 0.0);
      CHECK((rb2.p_f_ref[k][0] - rb.p_f_ref[k][0]).norm() == 0.0);
    }
  }

  SUBCASE("moving one foot target changes only that leg's joints") {
    auto p_f = rb.p_f_ref;
    // Left foot is in stance over the first window; shift its later swing
    // target: columns where foot 0 swings.
    for (int k = 6; k <= 10; ++k) p_f[k][0].x() += 0.05;
    const auto rb2 = update_reference_from_solution(rb, p_f, rb.p_c_ref, rb.dt, m);
    for (int k = 0; k <= 10; ++k) {
      // Right leg joints (indices 8, 9) never change.
      CHECK(rb2.q_ref[k][8] == rb.q_ref[k][8]);
      CHECK(rb2.q_ref[k][9] == rb.q_ref[k][9]);
    }
    bool left_changed = false;
    for (int k = 6; k <= 10; ++k)
      if (std::abs(rb2.q_ref[k][6] - rb.q_ref[k][6]) > 1e-9) left_changed = true;
    CHECK(left_changed);
  }

  SUBCASE("doubling dt halves the interpolated joint velocities") {
    const auto rb2 = update_reference_from_solution(rb0, rb0.p_f_ref, rb0.p_c_ref, 2.0 * rb0.dt, m);
    for (int k = 0; k < 10; ++k)
      CHECK((rb2.qd_ref[k] - 0.5 * rb0.qd_ref[k]).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  SUBCASE("out-of-reach solution reports the offending step") {
    auto p_f = rb.p_f_ref;
    p_f[3][1] = Vector3d(5.0, 0, 0.0);
    try {
      update_reference_from_solution(rb, p_f, rb.p_c_ref, rb.dt, m);
      CHECK(false);
    } catch (const IkOutOfReach& e) {
      CHECK(std::string(e.what()).find("step 3") != std::string::npos);
    }
  }
}
