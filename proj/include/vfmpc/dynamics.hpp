#pragma once

#include <vector>

#include "vfmpc/kinematics.hpp"
#include "vfmpc/terrain.hpp"

namespace vfmpc {

/// Mass matrix, bias vector and actuation selection over the model's
/// active (planar-reduced) coordinates.
struct DynamicsTerms {
  MatrixXd M;  // n_a x n_a
  VectorXd C;  // Coriolis + gravity
  MatrixXd S;  // n_a x n_j actuation selection
};

DynamicsTerms dynamics_terms(const RobotModel& model, const VectorXd& q, const VectorXd& qd);

/// Reduce a spatial vector/matrix onto the active dofs and lift back.
VectorXd reduce_vec(const RobotModel& model, const VectorXd& full);
VectorXd lift_vec(const RobotModel& model, const VectorXd& reduced);

struct ContactSolution {
  VectorXd qdd;                  // full spatial layout (lifted)
  std::vector<Vector3d> forces;  // world contact force per active contact
};

/// KKT contact dynamics: pins active contact-point accelerations. Planar
/// models constrain the x/z point rows. Throws on a rank-deficient
/// contact set.
ContactSolution constrained_forward_dynamics(const RobotModel& model, const VectorXd& q,
                                             const VectorXd& qd, const VectorXd& tau_j,
                                             const std::vector<int>& active_contacts);

struct PlantState {
  GenCoordState gen;
  std::vector<bool> contact;          // per configured contact point
  std::vector<Vector3d> contact_force;
  double time = 0.0;
};

struct PlantParams {
  double dt = 1e-3;
  int substeps = 5;        // internal substeps; the stiff damper needs them
  double k_normal = 1e5;   // N/m
  double d_normal = 1e3;   // N s/m
  double mu = 0.7;
  double v_slip = 0.01;    // regularization velocity, m/s
  double payload = 0.0;    // extra torso mass, kg (unknown to controllers)
};

/// Compliant one-sided contact law: normal spring-damper plus regularized
/// Coulomb tangential force. pen > 0 means penetration.
Vector3d contact_force_law(const PlantParams& params, double pen, double vx, double vz);

PlantState make_plant_state(const RobotModel& model, const VectorXd& q, const VectorXd& qd);

/// One 1 ms semi-implicit Euler step with compliant ground contact and
/// torque saturation. `f_ext` is an optional external force applied at the
/// base CoM (disturbances). Throws on NaN/divergence.
PlantState simulate_step(const RobotModel& model, const PlantState& plant, const VectorXd& tau_j,
                         const Terrain& terrain, const PlantParams& params,
                         const Vector3d& f_ext = Vector3d::Zero());

}  // namespace vfmpc
