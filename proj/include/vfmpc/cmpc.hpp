#pragma once

#include <functional>

#include "vfmpc/centroidal.hpp"
#include "vfmpc/qp.hpp"

namespace vfmpc {

/// Per-step search directions solved by one CMPC subproblem.
struct SearchDirections {
  std::vector<std::array<Vector3d, 2>> df, dtau, dp_f;  // per column
  std::vector<Vector3d> dp_c;                           // per column, 0..h
  double inf_norm_positions() const;
  double inf_norm_forces() const;
  double inf_norm_moments() const;
};

/// Running totals u^j across sequential iterations. Foot positions are one
/// shared value per stance window, expanded per column on demand.
struct MpcTotals {
  std::vector<std::array<Vector3d, 2>> f, tau;  // per column 0..h-1
  std::vector<Vector3d> p_c;                    // per column 0..h
  std::vector<Vector3d> p_f_window;             // per window
};

/// Stance windows of a schedule: one foot-location variable per footstep.
/// Swing columns map to the upcoming window (synthetic trailing windows are
/// added for swings that land beyond the horizon so every column has a
/// landing target).
struct WindowSet {
  struct Window {
    int foot = 0;
    int start = 0, end = 0;  // column range [start, end)
    bool current_stance = false;
    bool next_touchdown = false;
    bool synthetic = false;
  };
  std::vector<Window> win;
  std::array<std::vector<int>, 2> col_map;  // per foot, per column 0..h
  int count() const { return static_cast<int>(win.size()); }
};

WindowSet build_windows(const ContactSchedule& schedule);

/// Linearized one-step dynamics about the previous totals: x_{k+1} =
/// A x_k + B du_k + C, du_k = [df_L, df_R, dtau_L, dtau_R, dp_fL, dp_fR,
/// dp_c] (21 columns). At du = 0 this reproduces cd_step_exact at u_prev.
struct LinearizedStep {
  MatrixXd A;  // 12 x 12
  MatrixXd B;  // 12 x 21
  VectorXd C;  // 12
};

LinearizedStep linearize_dynamics(const CentroidalState& x_k, const ContactConfig& u_prev_k,
                                  double dt);

struct FootBounds {
  Vector3d lo = Vector3d::Constant(-1e30);
  Vector3d hi = Vector3d::Constant(1e30);
  bool violation = false;  // empty intersection; widest kinematic box returned
};

/// One-step-preview foot bounds: kinematic reach box about the hip
/// intersected with the terrain interval allowed for this leg, selected by
/// the intended target.
FootBounds foot_bounds(const Terrain& terrain, const Vector3d& p_c, const ContactSchedule& schedule,
                       int leg, const Vector3d& target_hint, const MpcConfig& config);

/// Condensed CMPC subproblem in the search directions (states eliminated by
/// rolling out the linearized dynamics).
struct Subproblem {
  QuadraticProgram qp;
  WindowSet windows;
  int n_wrench = 0, n_feet = 0, n_pc = 0;
  // Column layout: [wrench (12 per step) | windows (3 each) | dp_c (3 each, 0..h)]
  int wrench_col(int k, int foot, bool torque) const { return 12 * k + (torque ? 6 : 0) + 3 * foot; }
  int window_col(int w) const { return n_wrench + 3 * w; }
  int pc_col(int k) const { return n_wrench + n_feet + 3 * k; }
};

/// Per-window box constraints assembled by the caller: the Eq.-style
/// one-step-preview bounds on the next touchdown, terrain z pins on later
/// windows, exact pins on anchored values.
Subproblem assemble_subproblem(const ReferenceBundle& refs, const CentroidalState& x0,
                               const Vector3d& p_c_meas, double dt, const MpcTotals& u_prev,
                               const ContactSchedule& schedule,
                               const std::vector<FootBounds>& window_bounds, const MpcConfig& config,
                               bool planar, const std::array<Vector3d, 2>& foot_meas);

/// dt predictor queried inside the sequential loop (absent = fixed dt).
using GaitNetFn =
    std::function<double(const VectorXd& q, const VectorXd& qd, const std::array<Vector3d, 2>& p_f_next)>;

struct MpcDiagnostics {
  int iterations = 0;
  int qp_count = 0;
  bool converged = false;
  bool fallback = false;
  bool bound_violation = false;
  std::vector<double> step_norms;
  std::vector<double> dt_history;
  double solve_ms = 0.0;
};

struct MpcSolveResult {
  MpcTotals u;
  double dt_final = 0.05;
  ReferenceBundle refs;
  ContactSchedule schedule;
  std::vector<std::array<Vector3d, 2>> p_f_cols;  // window expansion per column
  std::array<Vector3d, 2> next_placement;         // landing targets per foot
  std::array<FootBounds, 2> bounds_applied;
  std::array<bool, 2> bounds_active{false, false};
  QpWarmStart qp_warm;  // dual memory; keeps the active set across solves
  MpcDiagnostics diag;
};

/// Constraint audit of a converged solution (friction, gating, stationarity
/// and bound slacks; non-negative = satisfied).
struct SolutionAudit {
  double friction_slack_min = 1e30;
  double swing_wrench_max = 0.0;
  double stance_drift_max = 0.0;
  double bound_margin_min = 1e30;
};

SolutionAudit audit_solution(const MpcSolveResult& result, const MpcConfig& config, bool planar);

/// Sequential convex MPC with the learned step-duration predictor in the
/// loop. One instance per control thread; owns QP workspace and warm-start
/// memory.
class SeqCmpc {
 public:
  SeqCmpc(const RobotModel& model, const MpcConfig& config);

  /// Footstep-start solve: predictor queried each iteration, nominal-dt
  /// fallback armed.
  MpcSolveResult sequential_solve(const GenCoordState& state, const Command& command,
                                  const Terrain& terrain, const ContactSchedule& schedule,
                                  const GaitNetFn& gaitnet);

  /// Mid-step re-solve at the footstep's frozen dt. `warm` carries the
  /// previous solve's totals and refreshed references; its schedule must
  /// match (same stance foot and elapsed columns), else pass nullptr.
  MpcSolveResult mid_step_solve(const GenCoordState& state, const Command& command,
                                const Terrain& terrain, const ContactSchedule& schedule,
                                double dt_fixed, const MpcSolveResult* warm);

  const MpcConfig& config() const { return config_; }

 private:
  MpcSolveResult run_loop(const GenCoordState& state, const Command& command, const Terrain& terrain,
                          const ContactSchedule& schedule, double dt0, const GaitNetFn& gaitnet,
                          const MpcSolveResult* warm);
  MpcTotals initial_guess(const ContactSchedule& schedule, const WindowSet& windows,
                          const ReferenceBundle& refs, const std::array<Vector3d, 2>& foot_meas) const;

  RobotModel model_;
  MpcConfig config_;
  QpSolver solver_;
};

}  // namespace vfmpc
