#pragma once

#include <array>
#include <vector>

#include "vfmpc/kinematics.hpp"
#include "vfmpc/mpc_config.hpp"
#include "vfmpc/terrain.hpp"

namespace vfmpc {

/// Contact wrenches and geometry driving the centroidal dynamics.
struct ContactConfig {
  std::array<Vector3d, 2> f{Vector3d::Zero(), Vector3d::Zero()};
  std::array<Vector3d, 2> tau{Vector3d::Zero(), Vector3d::Zero()};
  std::array<Vector3d, 2> p_f{Vector3d::Zero(), Vector3d::Zero()};
  Vector3d p_c = Vector3d::Zero();
  double mass = 10.0;
  double gravity = kGravity;
};

/// One exact step of the discrete centroidal dynamics: the bilinear update
/// of the momenta plus the left-Riemann advance of the pose primitive.
CentroidalState cd_step_exact(const CentroidalState& x, const ContactConfig& c, double dt);

/// Momentum-primitive trajectory from a sampled joint trajectory:
/// H_k = A_G(q_k) q_k - sum_{i<k} A_G_dot(q_i, qd_i) q_i dt, anchored at
/// H_0 = A_G(q_0) q_0.
std::vector<Vector6d> centroidal_pose_integrate(const std::vector<VectorXd>& q_traj,
                                                const std::vector<VectorXd>& qd_traj,
                                                const RobotModel& model, double dt);

struct Command {
  double vx = 0.0;  // commanded forward velocity, m/s
};

/// Reference trajectories over the horizon (h+1 samples, index 0 = now).
/// p_f_ref holds contact placements (piecewise constant; swing columns carry
/// the upcoming landing target). The joint references interpolate swing
/// columns along the swing curve. base_offset maps reference CoM positions
/// to base positions; it is frozen from the measured state at construction
/// so the joint references start physically consistent with the
/// measurement.
struct ReferenceBundle {
  double dt = 0.05;
  int h = 10;
  int h_swing = 5;
  double vx_cmd = 0.0;
  ContactSchedule schedule;
  Vector3d base_offset = Vector3d::Zero();
  std::array<Vector3d, 2> liftoff{Vector3d::Zero(), Vector3d::Zero()};
  double swing_apex = 0.06;
  std::vector<VectorXd> q_ref, qd_ref;
  std::vector<std::array<Vector3d, 2>> p_f_ref;
  std::vector<Vector3d> p_c_ref;
  std::vector<Vector6d> h_ref, H_ref;
};

/// Initial reference construction from state + command: CoM ramp at the
/// commanded rate, capture-style nominal foot placement clipped to the
/// terrain, joint references by analytic IK along the swing curve, momenta
/// references from the joint references.
ReferenceBundle build_reference(const RobotModel& model, const GenCoordState& state,
                                const Command& command, const ContactSchedule& schedule, double dt0,
                                const Terrain& terrain, const MpcConfig& config);

/// Per-iteration reference refresh: joint references re-derived by IK
/// against the iteration's foot solutions at the new dt, momenta references
/// recomputed. The base rides the command-anchored CoM ramp (re-timed to
/// dt_new); feeding the solution CoM back into the reference couples the
/// iteration to itself and stalls convergence, so p_c_sol only steers the
/// reach handling.
ReferenceBundle update_reference_from_solution(const ReferenceBundle& bundle,
                                               const std::vector<std::array<Vector3d, 2>>& p_f_sol,
                                               const std::vector<Vector3d>& p_c_sol, double dt_new,
                                               const RobotModel& model);

/// Base position whose straight-down hips put the CoM at p_c for the
/// nominal posture (constant offset; reference-level approximation).
Vector3d base_from_com(const RobotModel& model, const Vector3d& p_c);

}  // namespace vfmpc
