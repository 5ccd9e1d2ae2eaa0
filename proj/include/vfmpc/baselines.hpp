#pragma once

#include "vfmpc/centroidal.hpp"
#include "vfmpc/dynamics.hpp"
#include "vfmpc/sqp.hpp"

namespace vfmpc {

/// Whole-body MPC weights over the planar-reduced coordinates.
struct WbWeights {
  VectorXd Q1;  // pose tracking: base (x, z, pitch) + joints
  VectorXd Q2;  // joint torque
  VectorXd Q3;  // contact force (per foot: fx, fz)
  VectorXd Q4;  // velocities
  static WbWeights planar_defaults(int n_j);
};

/// Explicit kino-dynamic MPC weights.
struct KdWeights {
  Vector3d R1;      // momentum tracking (l_x, l_z, k_y)
  VectorXd R2_q;    // state tracking: base + joints
  VectorXd R2_qd;
  VectorXd R2_f;    // per foot (fx, fz)
  static KdWeights planar_defaults(int n_j);
};

/// Per-half-horizon sampling times. `optimize` adds them to the decision
/// variables (bounded to [dt_min, dt_max]); otherwise the listed values are
/// parameters (fixed and externally-randomized modes).
struct DtMode {
  bool optimize = false;
  std::vector<double> block_dt{0.05, 0.05, 0.05};
  double dt_min = 0.03, dt_max = 0.06;
};

struct BaselineResult {
  std::vector<VectorXd> q, qd;                     // k = 0..h (0 = current state)
  std::vector<VectorXd> tau_j;                     // k = 0..h-1 (whole-body only)
  std::vector<std::array<Vector3d, 2>> lambda;     // ground reaction force per foot
  std::vector<double> dt_cols;                     // per column
  double dyn_residual = 0.0;                       // whole-body dynamics defect at solution
  bool converged = false;
  bool flagged = false;                            // non-convergence; data collection discards
  int iterations = 0;
  int qp_count = 0;
  double solve_ms = 0.0;
  VectorXd z;                                      // raw solution for warm starts
};

/// Direct multiple-shooting whole-body MPC over the planar model (Coriolis,
/// contact KKT forces and torques as variables; semi-implicit Euler
/// transcription). Data-collection oracle and timing baseline.
BaselineResult solve_wb_mpc(const RobotModel& model, const GenCoordState& state,
                            const ReferenceBundle& refs, const ContactSchedule& schedule,
                            const WbWeights& weights, const DtMode& dt_mode,
                            const WrenchBounds& bounds, const VectorXd* z_warm = nullptr,
                            int max_sqp_iter = 30);

/// Explicit kino-dynamic MPC: joint states + contact forces as variables,
/// centroidal dynamics with the configuration-dependent momentum map.
BaselineResult solve_explicit_kd(const RobotModel& model, const GenCoordState& state,
                                 const ReferenceBundle& refs, const ContactSchedule& schedule,
                                 const KdWeights& weights, const DtMode& dt_mode,
                                 const WrenchBounds& bounds, const VectorXd* z_warm = nullptr,
                                 int max_sqp_iter = 30);

}  // namespace vfmpc
