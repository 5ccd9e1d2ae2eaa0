#pragma once

#include <vector>

#include "vfmpc/model.hpp"

namespace vfmpc {

struct FramePose {
  Matrix3d R = Matrix3d::Identity();
  Vector3d p = Vector3d::Zero();
};

/// World poses for every link plus world contact-point positions.
struct FrameSet {
  std::vector<FramePose> link;         // indexed by link
  std::vector<Vector3d> joint_pos;     // world joint anchor positions
  std::vector<Vector3d> joint_axis;    // world joint axes
  std::vector<Vector3d> contact;       // world contact points
};

/// x = [H; h]: centroidal pose primitive and spatial momentum [l_G; k_G].
struct CentroidalState {
  Vector6d H = Vector6d::Zero();
  Vector6d h = Vector6d::Zero();
};

struct CentroidalQuantities {
  MatrixXd A_G;      // 6 x (6+n_j), rows [l; k_G]
  MatrixXd A_G_dot;  // finite difference along the state flow
  Vector6d h;        // [l_G; k_G]
  Vector3d p_c;
};

/// Map from rpy rates to world angular velocity for R = Rz(yaw)Ry(pitch)Rx(roll),
/// columns ordered (roll, pitch, yaw).
Matrix3d rpy_rate_map(const Vector3d& rpy);
Matrix3d rpy_to_rotation(const Vector3d& rpy);

FrameSet forward_kinematics(const RobotModel& model, const VectorXd& q);

Vector3d com_position(const RobotModel& model, const VectorXd& q);

/// Full 6 x n_q spatial Jacobian [linear; angular] of a contact point.
MatrixXd contact_jacobian(const RobotModel& model, const VectorXd& q, int contact_id);

/// Jacobian of an arbitrary point attached to a link.
MatrixXd point_jacobian(const RobotModel& model, const VectorXd& q, int link, const Vector3d& offset);

/// Centroidal momentum matrix, its finite-difference rate, h = A_G qd and CoM.
CentroidalQuantities centroidal_momentum(const RobotModel& model, const VectorXd& q, const VectorXd& qd);

/// x = [H; h], anchored H := A_G(q) q (integration constant of the
/// momentum primitive is fixed the same way on references).
CentroidalState joints_to_momenta(const RobotModel& model, const VectorXd& q, const VectorXd& qd);

/// Mass matrix over the full spatial coordinates via composite-rigid-body
/// accumulation (planar reduction selects active rows/cols downstream).
MatrixXd mass_matrix_spatial(const RobotModel& model, const VectorXd& q);

/// Recursive Newton-Euler inverse dynamics: generalized forces realizing qdd
/// (gravity included). Full spatial coordinates.
VectorXd inverse_dynamics_spatial(const RobotModel& model, const VectorXd& q, const VectorXd& qd,
                                  const VectorXd& qdd);

}  // namespace vfmpc
