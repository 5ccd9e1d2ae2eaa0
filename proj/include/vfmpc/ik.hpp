#pragma once

#include "vfmpc/core.hpp"

namespace vfmpc {

struct IkOutOfReach : Error {
  explicit IkOutOfReach(const std::string& msg) : Error(msg) {}
};

/// 5-DoF line-foot leg parameters. side = +1 left, -1 right.
struct LegParams3D {
  double l = 0.22;                      // thigh = shank length
  double r21_y = 0.06;                  // y-offset joint 2 from joint 1
  Vector3d r_c1 = Vector3d(0, 0.06, -0.12);  // body-frame CoM -> joint 1
  int side = +1;
};

using Vector5d = Eigen::Matrix<double, 5, 1>;

/// Closed-form IK of the 5-DoF leg. Enforces zero foot pitch/yaw relative
/// to the body: q0 = 0, q4 = -q2 - q3 - theta. Throws IkOutOfReach when the
/// target violates the arcsin/arccos domains beyond a 1e-9 clamp.
Vector5d leg_ik_3d(const LegParams3D& params, const Matrix3d& R, double theta, const Vector3d& p_c,
                   const Vector3d& p_f_des);

/// Forward chain of the same leg; world foot (ankle) position.
Vector3d leg_fk_3d(const LegParams3D& params, const Matrix3d& R, const Vector3d& p_c,
                   const Vector5d& q);

/// World foot frame rotation (for the pitch/yaw orientation checks).
Matrix3d leg_fk_3d_foot_rotation(const LegParams3D& params, const Matrix3d& R, const Vector5d& q);

/// Two-link planar leg IK in the x-z plane. knee_sign < 0 bends the knee
/// backward (the biped's convention). Returns (q_hip, q_knee).
std::pair<double, double> leg_ik_planar(double l1, double l2, const Vector3d& hip_pos,
                                        const Vector3d& foot_pos, int knee_sign = -1);

Vector3d leg_fk_planar(double l1, double l2, const Vector3d& hip_pos, double q_hip, double q_knee);

}  // namespace vfmpc
