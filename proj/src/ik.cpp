#include "vfmpc/ik.hpp"

#include <Eigen/Geometry>

namespace vfmpc {

namespace {

// Clamp an inverse-trig argument that is within tol of [-1, 1]; anything
// further out is a reach violation.
double domain_clamp(double x, const char* what) {
  constexpr double tol = 1e-9;
  if (x > 1.0 + tol || x < -1.0 - tol)
    throw IkOutOfReach(std::string("leg IK target out of reach: ") + what + " = " + std::to_string(x));
  return clamp(x, -1.0, 1.0);
}

Matrix3d Rx(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitX()).toRotationMatrix(); }
Matrix3d Ry(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitY()).toRotationMatrix(); }
Matrix3d Rz(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitZ()).toRotationMatrix(); }

}  // namespace

Vector5d leg_ik_3d(const LegParams3D& params, const Matrix3d& R, double theta, const Vector3d& p_c,
                   const Vector3d& p_f_des) {
  const double s = static_cast<double>(params.side);
  const double l = params.l;
  const Vector3d r1 = R.transpose() * (p_f_des - p_c) - params.r_c1;  // joint 1 -> foot, body frame

  const double r_yz = std::hypot(r1.y(), r1.z());
  const double cos_off = domain_clamp(r_yz < 1e-12 ? 2.0 : s * params.r21_y / r_yz, "r21_y/r_yz");
  const double alpha = std::atan2(r1.z(), r1.y());
  const double off = std::acos(cos_off);

  // Two roll candidates; pick the one that puts the foot below the hip.
  auto wrap = [](double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
  };
  double q1 = wrap(alpha + off);
  {
    const double alt = wrap(alpha - off);
    auto wz = [&](double q) { return -std::sin(q) * r1.y() + std::cos(q) * r1.z(); };
    if (wz(q1) > 0.0 && wz(alt) <= 0.0) q1 = alt;
    else if (wz(q1) <= 0.0 && wz(alt) <= 0.0 && std::abs(alt) < std::abs(q1)) q1 = alt;
  }

  const Vector3d w = Rx(-q1) * r1;
  const double d = std::hypot(w.x(), w.z());
  const double half = domain_clamp(d / (2.0 * l), "r_xz/2l");

  const double q3 = 2.0 * std::asin(half) - M_PI;
  const double q2 = std::atan2(-w.x(), -w.z()) - 0.5 * q3;
  const double q4 = -q2 - q3 - theta;

  Vector5d q;
  q << 0.0, q1, q2, q3, q4;
  return q;
}

Vector3d leg_fk_3d(const LegParams3D& params, const Matrix3d& R, const Vector3d& p_c,
                   const Vector5d& q) {
  const double s = static_cast<double>(params.side);
  const double l = params.l;
  const Vector3d knee = Ry(q[2]) * Vector3d(0, 0, -l);
  const Vector3d ankle_rel = knee + Ry(q[2] + q[3]) * Vector3d(0, 0, -l);
  const Vector3d p_body =
      params.r_c1 + Rz(q[0]) * Rx(q[1]) * (Vector3d(0, s * params.r21_y, 0) + ankle_rel);
  return p_c + R * p_body;
}

Matrix3d leg_fk_3d_foot_rotation(const LegParams3D& params, const Matrix3d& R, const Vector5d& q) {
  (void)params;
  return R * Rz(q[0]) * Rx(q[1]) * Ry(q[2] + q[3] + q[4]);
}

std::pair<double, double> leg_ik_planar(double l1, double l2, const Vector3d& hip_pos,
                                        const Vector3d& foot_pos, int knee_sign) {
  const double dx = foot_pos.x() - hip_pos.x();
  const double dz = foot_pos.z() - hip_pos.z();
  const double r2 = dx * dx + dz * dz;
  const double r = std::sqrt(r2);
  const double c_knee = domain_clamp((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), "2-link cos(knee)");
  const double q_knee = knee_sign * std::acos(c_knee);
  const double gamma = std::atan2(-dx, -dz);
  const double q_hip = gamma - std::atan2(l2 * std::sin(q_knee), l1 + l2 * std::cos(q_knee));
  (void)r;
  return {q_hip, q_knee};
}

Vector3d leg_fk_planar(double l1, double l2, const Vector3d& hip_pos, double q_hip, double q_knee) {
  const double x = -l1 * std::sin(q_hip) - l2 * std::sin(q_hip + q_knee);
  const double z = -l1 * std::cos(q_hip) - l2 * std::cos(q_hip + q_knee);
  return hip_pos + Vector3d(x, 0.0, z);
}

}  // namespace vfmpc
