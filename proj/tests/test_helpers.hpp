#pragma once

#include <string>

#include "vfmpc/core.hpp"
#include "vfmpc/kinematics.hpp"
#include "vfmpc/model.hpp"

namespace vfmpc::testing {

inline std::string model_path(const char* name) {
  return std::string(VFMPC_SOURCE_DIR) + "/models/" + name;
}

inline RobotModel biped2d() { return load_robot_model(model_path("biped2d.json")); }
inline RobotModel leg3d() { return load_robot_model(model_path("leg3d.json")); }

/// Random state respecting planar structure and joint limits.
inline GenCoordState random_state(const RobotModel& m, Rng& rng, double vel_scale = 1.0) {
  GenCoordState s(m.n_q());
  s.q[0] = rng.uniform(-0.5, 0.5);
  s.q[2] = rng.uniform(0.3, 0.7);
  s.q[4] = rng.uniform(-0.4, 0.4);
  if (!m.planar) {
    s.q[1] = rng.uniform(-0.5, 0.5);
    s.q[3] = rng.uniform(-0.4, 0.4);
    s.q[5] = rng.uniform(-0.4, 0.4);
  }
  for (int j = 0; j < m.n_j(); ++j)
    s.q[6 + j] = rng.uniform(m.joints[j].q_min * 0.8, m.joints[j].q_max * 0.8);
  for (int i : m.active_dofs()) s.qd[i] = vel_scale * rng.uniform(-1.0, 1.0);
  return s;
}

/// Independent per-link momentum oracle: forward velocity recursion over
/// rotation matrices, then classical momenta about the CoM.
inline Vector6d per_link_momentum_oracle(const RobotModel& m, const VectorXd& q, const VectorXd& qd) {
  const FrameSet fs = forward_kinematics(m, q);
  const size_t nl = m.links.size();
  std::vector<int> parent_of(nl, -1), joint_of(nl, -1);
  for (int j = 0; j < m.n_j(); ++j) {
    parent_of[m.joints[j].child] = m.joints[j].parent;
    joint_of[m.joints[j].child] = j;
  }
  // Angular velocity and velocity of the link-frame origin for every link.
  std::vector<Vector3d> w(nl), v0(nl);
  const Matrix3d E = rpy_rate_map(q.segment<3>(3));
  w[0] = E * qd.segment<3>(3);
  v0[0] = qd.head<3>();
  for (size_t l = 1; l < nl; ++l) {
    const int p = parent_of[l], j = joint_of[l];
    const Vector3d anchor = fs.joint_pos[j];
    const Vector3d axis = fs.joint_axis[j];
    w[l] = w[p] + axis * qd[6 + j];
    v0[l] = v0[p] + w[p].cross(anchor - fs.link[p].p);  // link origin = joint anchor
  }
  // Momenta about the robot CoM.
  Vector3d p_c = Vector3d::Zero();
  double msum = 0.0;
  std::vector<Vector3d> com_w(nl), vcom(nl);
  for (size_t l = 0; l < nl; ++l) {
    com_w[l] = fs.link[l].p + fs.link[l].R * m.links[l].com;
    vcom[l] = v0[l] + w[l].cross(com_w[l] - fs.link[l].p);
    p_c += m.links[l].mass * com_w[l];
    msum += m.links[l].mass;
  }
  p_c /= msum;
  Vector6d h = Vector6d::Zero();
  for (size_t l = 0; l < nl; ++l) {
    const Matrix3d Iw = fs.link[l].R * m.links[l].inertia * fs.link[l].R.transpose();
    h.head<3>() += m.links[l].mass * vcom[l];
    h.tail<3>() += Iw * w[l] + m.links[l].mass * (com_w[l] - p_c).cross(vcom[l]);
  }
  return h;
}

}  // namespace vfmpc::testing
