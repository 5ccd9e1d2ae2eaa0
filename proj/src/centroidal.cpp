#include "vfmpc/centroidal.hpp"

#include "vfmpc/ik.hpp"
#include "vfmpc/swing.hpp"

namespace vfmpc {

CentroidalState cd_step_exact(const CentroidalState& x, const ContactConfig& c, double dt) {
  VFMPC_CHECK(dt > 0.0, "cd_step_exact: dt must be positive");
  Vector3d ldot = Vector3d(0, 0, -c.mass * c.gravity);
  Vector3d kdot = Vector3d::Zero();
  for (int i = 0; i < 2; ++i) {
    ldot += c.f[i];
    kdot += (c.p_f[i] - c.p_c).cross(c.f[i]) + c.tau[i];
  }
  CentroidalState next;
  next.H = x.H + dt * x.h;
  next.h.head<3>() = x.h.head<3>() + dt * ldot;
  next.h.tail<3>() = x.h.tail<3>() + dt * kdot;
  return next;
}

std::vector<Vector6d> centroidal_pose_integrate(const std::vector<VectorXd>& q_traj,
                                                const std::vector<VectorXd>& qd_traj,
                                                const RobotModel& model, double dt) {
  VFMPC_CHECK(q_traj.size() == qd_traj.size() && !q_traj.empty(),
              "centroidal_pose_integrate: trajectory size mismatch");
  std::vector<Vector6d> H(q_traj.size());
  Vector6d correction = Vector6d::Zero();
  for (size_t k = 0; k < q_traj.size(); ++k) {
    const CentroidalQuantities cq = centroidal_momentum(model, q_traj[k], qd_traj[k]);
    H[k] = cq.A_G * q_traj[k] - correction;
    correction += dt * (cq.A_G_dot * q_traj[k]);
  }
  return H;
}

Vector3d base_from_com(const RobotModel& model, const Vector3d& p_c) {
  // Offset measured at the straight-leg zero posture.
  const Vector3d offset = com_position(model, VectorXd::Zero(model.n_q()));
  return p_c - offset;
}

namespace {

// Joint, velocity and momenta references derived from CoM/placement
// trajectories. Swing columns are interpolated along the swing curve toward
// the placement they carry. Shared by build_reference and
// update_reference_from_solution so a fixed-point refresh is bitwise stable.
void derive_joint_refs(const RobotModel& model, const std::vector<Vector3d>& p_c_traj,
                       const std::vector<std::array<Vector3d, 2>>& placements, double dt,
                       ReferenceBundle* out) {
  const size_t n = p_c_traj.size();
  const ContactSchedule& sch = out->schedule;

  // Foot positions for IK: anchors during stance, curve during swing.
  std::vector<std::array<Vector3d, 2>> p_f_traj(n);
  for (int foot = 0; foot < 2; ++foot) {
    Vector3d lift = out->liftoff[foot];
    bool was_stance = sch.in_stance(foot, 0);
    for (size_t k = 0; k < n; ++k) {
      const int kc = std::min<int>(static_cast<int>(k), sch.h - 1);
      const bool stance = sch.in_stance(foot, kc);
      if (stance) {
        p_f_traj[k][foot] = placements[k][foot];
        lift = placements[k][foot];
      } else {
        const int cols_into = (sch.elapsed + kc) % sch.h_swing;
        const double phase = (static_cast<double>(cols_into) +
                              (static_cast<int>(k) >= sch.h ? 1.0 : 0.0)) /
                             sch.h_swing;
        p_f_traj[k][foot] =
            swing_trajectory(lift, placements[k][foot], phase, out->swing_apex).pos;
      }
      was_stance = stance;
      (void)was_stance;
    }
  }

  out->q_ref.assign(n, VectorXd::Zero(model.n_q()));
  out->qd_ref.assign(n, VectorXd::Zero(model.n_q()));
  for (size_t k = 0; k < n; ++k) {
    VectorXd q = VectorXd::Zero(model.n_q());
    const Vector3d base = p_c_traj[k] + out->base_offset;
    q.head<3>() = base;
    if (model.planar) q[1] = 0.0;
    try {
      if (model.planar) {
        for (int leg = 0; leg < 2; ++leg) {
          const auto [qh, qk] =
              leg_ik_planar(model.legs.l1, model.legs.l2, base, p_f_traj[k][leg]);
          q[6 + 2 * leg] = qh;
          q[7 + 2 * leg] = qk;
        }
      } else {
        for (int leg = 0; leg < 2; ++leg) {
          LegParams3D lp;
          lp.l = model.legs.l1;
          lp.r21_y = model.legs.r21_y;
          lp.r_c1 = leg == 0 ? model.legs.r_c1_left : model.legs.r_c1_right;
          lp.side = leg == 0 ? +1 : -1;
          const Vector5d ql = leg_ik_3d(lp, Matrix3d::Identity(), 0.0, base, p_f_traj[k][leg]);
          for (int j = 0; j < 5; ++j) q[6 + 5 * leg + j] = ql[j];
        }
      }
    } catch (const IkOutOfReach& e) {
      throw IkOutOfReach("reference update at step " + std::to_string(k) + ": " + e.what());
    }
    out->q_ref[k] = q;
  }
  for (size_t k = 0; k + 1 < n; ++k) out->qd_ref[k] = (out->q_ref[k + 1] - out->q_ref[k]) / dt;
  if (n >= 2) out->qd_ref[n - 1] = out->qd_ref[n - 2];

  out->h_ref.assign(n, Vector6d::Zero());
  out->H_ref.assign(n, Vector6d::Zero());
  Vector6d correction = Vector6d::Zero();
  for (size_t k = 0; k < n; ++k) {
    const CentroidalQuantities cq = centroidal_momentum(model, out->q_ref[k], out->qd_ref[k]);
    out->h_ref[k] = cq.h;
    out->H_ref[k] = cq.A_G * out->q_ref[k] - correction;
    correction += dt * (cq.A_G_dot * out->q_ref[k]);
  }
}

Vector3d clamp_to_reach(const RobotModel& model, const Vector3d& hip, const Vector3d& target) {
  // Exact boundary: the leg IK accepts grazing full extension.
  const double reach = model.legs.l1 + model.legs.l2;
  const Vector3d d = target - hip;
  if (d.norm() <= reach) return target;
  return hip + d * (reach / d.norm());
}

}  // namespace

ReferenceBundle build_reference(const RobotModel& model, const GenCoordState& state,
                                const Command& command, const ContactSchedule& schedule, double dt0,
                                const Terrain& terrain, const MpcConfig& config) {
  VFMPC_CHECK(std::abs(command.vx) <= 1.0, "build_reference: commanded velocity outside [-1, 1] m/s");
  const int h = schedule.h;
  ReferenceBundle rb;
  rb.dt = dt0;
  rb.h = h;
  rb.h_swing = schedule.h_swing;

  const Vector3d p_c_now = com_position(model, state.q);
  const CentroidalQuantities cq = centroidal_momentum(model, state.q, state.qd);
  const double v_now = cq.h[0] / model.total_mass();
  const FrameSet fs = forward_kinematics(model, state.q);
  rb.base_offset = state.q.head<3>() - p_c_now;
  if (model.planar) rb.base_offset.y() = 0.0;

  rb.vx_cmd = command.vx;
  rb.p_c_ref.resize(h + 1);
  const Vector3d pc_ref0(p_c_now.x(), 0.0, config.com_height);
  for (int k = 0; k <= h; ++k) rb.p_c_ref[k] = pc_ref0 + Vector3d(command.vx * k * dt0, 0, 0);

  rb.schedule = schedule;
  rb.swing_apex = config.swing_apex;

  // Foot placements: anchors while in stance, capture-style landing target
  // carried through swing columns.
  rb.p_f_ref.assign(h + 1, {Vector3d::Zero(), Vector3d::Zero()});
  const double swing_time = schedule.h_swing * dt0;
  auto capture_target = [&](double hip_x, int foot) {
    double tx = hip_x + v_now * swing_time / 2.0 + config.capture_gain * (v_now - command.vx);
    // Keep the touchdown on allowed ground near the nominal spot.
    const auto intervals = terrain.allowed_intervals(tx - 0.6, tx + 0.6, foot);
    if (!intervals.empty()) {
      double best = 1e30, px = tx;
      for (const auto& iv : intervals) {
        const double c = clamp(tx, iv.first, iv.second);
        if (std::abs(c - tx) < best) {
          best = std::abs(c - tx);
          px = c;
        }
      }
      tx = px;
    }
    return Vector3d(tx, 0.0, terrain.height_at(tx));
  };
  for (int foot = 0; foot < 2; ++foot) {
    Vector3d anchor = model.planar ? fs.contact[foot]
                                   : Vector3d(0.5 * (fs.contact[2 * foot] + fs.contact[2 * foot + 1]));
    rb.liftoff[foot] = anchor;
    anchor.z() = terrain.height_at(anchor.x());
    Vector3d target = anchor;
    bool was_stance = schedule.in_stance(foot, 0);
    if (!was_stance) {
      const int remaining = schedule.h_swing - schedule.elapsed;
      target = capture_target(p_c_now.x() + command.vx * remaining * dt0, foot);
    }
    for (int k = 0; k <= h; ++k) {
      const bool stance =
          k < h ? schedule.in_stance(foot, k) : schedule.in_stance(foot, h - 1);
      if (stance) {
        if (!was_stance) anchor = target;  // touchdown
        rb.p_f_ref[k][foot] = anchor;
      } else {
        if (was_stance) {
          const int cols_into = (schedule.elapsed + k) % schedule.h_swing;
          const double t_td = (schedule.h_swing - cols_into) * dt0;
          target = capture_target(rb.p_c_ref[k].x() + command.vx * t_td, foot);
        }
        rb.p_f_ref[k][foot] = target;
      }
      was_stance = stance;
    }
  }

  // Clamp targets into leg reach before running IK.
  for (int k = 0; k <= h; ++k) {
    const Vector3d base = rb.p_c_ref[k] + rb.base_offset;
    for (int foot = 0; foot < 2; ++foot)
      rb.p_f_ref[k][foot] = clamp_to_reach(model, base, rb.p_f_ref[k][foot]);
  }

  derive_joint_refs(model, rb.p_c_ref, rb.p_f_ref, dt0, &rb);
  return rb;
}

ReferenceBundle update_reference_from_solution(const ReferenceBundle& bundle,
                                               const std::vector<std::array<Vector3d, 2>>& p_f_sol,
                                               const std::vector<Vector3d>& p_c_sol, double dt_new,
                                               const RobotModel& model) {
  VFMPC_CHECK(p_f_sol.size() == bundle.p_f_ref.size() && p_c_sol.size() == bundle.p_c_ref.size(),
              "update_reference_from_solution: trajectory size mismatch");
  (void)p_c_sol;
  ReferenceBundle rb = bundle;
  rb.dt = dt_new;
  rb.p_f_ref = p_f_sol;
  // Re-time the command ramp to the new sampling time.
  for (size_t k = 0; k < rb.p_c_ref.size(); ++k)
    rb.p_c_ref[k] = bundle.p_c_ref[0] + Vector3d(bundle.vx_cmd * k * dt_new, 0, 0);
  derive_joint_refs(model, rb.p_c_ref, p_f_sol, dt_new, &rb);
  return rb;
}

}  // namespace vfmpc
