#pragma once

#include <string>

#include "vfmpc/core.hpp"

namespace vfmpc {

/// Tracking / regularization weights of the momentum MPC cost. Vectors are
/// diagonal weights in the lifted [x,y,z] layout; planar configs give the
/// in-plane entries and the loader spreads them.
struct MpcWeights {
  Vector6d L1_h = Vector6d::Zero();   // [l; k]
  Vector6d L1_H = Vector6d::Zero();
  Vector3d L1_pf = Vector3d::Zero();
  Vector3d L1_pc = Vector3d::Zero();
  Vector3d L2_f = Vector3d::Zero();
  Vector3d L2_tau = Vector3d::Zero();
};

struct SolverTolerances {
  int j_max = 50;
  double eta_pos = 1e-5;
  double eta_f = 1e-2;
  double eta_tau = 1e-3;
};

struct WrenchBounds {
  double f_min = 10.0;
  double f_max = 250.0;
  double mu = 0.7;
  double mu_box() const { return 0.5 * std::sqrt(2.0) * mu; }
  double tau_max_x = 0.0;  // line foot resists pitch only
  double tau_max_z = 0.0;
  double foot_half_length = 0.0;  // |tau_y| <= foot_half_length * f_z
};

/// Binary stance table over the horizon. stance_foot is the foot in
/// stance at column 0; -1 means double support everywhere.
struct ContactSchedule {
  int h = 10;
  int h_swing = 5;
  int stance_foot = 0;
  int elapsed = 0;  // columns of the current footstep already consumed
  Eigen::Matrix<int, 2, Eigen::Dynamic> sigma;

  static ContactSchedule walking(int stance_foot, int elapsed = 0, int h = 10, int h_swing = 5);
  static ContactSchedule standing(int h = 10, int h_swing = 5);
  bool in_stance(int foot, int k) const { return sigma(foot, k) != 0; }
  int stance_count(int k) const { return sigma(0, k) + sigma(1, k); }
};

struct MpcConfig {
  MpcWeights weights;
  SolverTolerances tols;
  WrenchBounds bounds;
  int h = 10;
  int h_swing = 5;
  double dt_min = 0.03;
  double dt_max = 0.06;
  double dt_nominal = 0.05;
  double mass = 10.0;
  // Reference construction knobs.
  double com_height = 0.50;
  double capture_gain = 0.10;
  double swing_apex = 0.06;
  // Kinematic reach box of the foot about the hip projection.
  double reach_x = 0.35;
  double reach_z_nominal = 0.50;
  double reach_z_band = 0.15;
  // Low-level swing PD.
  double kp_swing = 120.0;
  double kd_swing = 2.4;
  // Proximal damping on the wrench search directions. The force profile
  // within a stance window is nearly cost-flat, so successive subproblems
  // would otherwise wander along it; damping the step (not the total)
  // leaves every fixed point unchanged.
  double prox_wrench = 1e-3;
};

MpcConfig load_mpc_config(const std::string& json_path);
MpcConfig parse_mpc_config(const std::string& json_text);

}  // namespace vfmpc
