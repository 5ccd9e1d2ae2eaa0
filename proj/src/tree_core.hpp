#pragma once

// Internal spatial-algebra helpers shared by kinematics.cpp and dynamics.cpp.
// Twists are 6-vectors [v_O; w] referenced to the world origin; spatial
// forces are [f; n_O].

#include "vfmpc/kinematics.hpp"

namespace vfmpc::tree {

// Spatial inertia of one body about the world origin.
struct SpatialInertia {
  double m = 0.0;
  Vector3d mc = Vector3d::Zero();  // m * com
  Matrix3d I_O = Matrix3d::Zero(); // rotational inertia about origin

  Vector6d apply(const Vector6d& v) const {
    const Vector3d vO = v.head<3>(), w = v.tail<3>();
    Vector6d h;
    h.head<3>() = m * vO - mc.cross(w);
    h.tail<3>() = mc.cross(vO) + I_O * w;
    return h;
  }

  SpatialInertia& operator+=(const SpatialInertia& o) {
    m += o.m;
    mc += o.mc;
    I_O += o.I_O;
    return *this;
  }
};

inline SpatialInertia body_inertia_at_origin(double mass, const Vector3d& com_w, const Matrix3d& Ic_w) {
  SpatialInertia si;
  si.m = mass;
  si.mc = mass * com_w;
  const Matrix3d cx = skew(com_w);
  si.I_O = Ic_w - mass * cx * cx;
  return si;
}

// Force-space cross product: d/dt of a momentum carried by twist v.
inline Vector6d cross_force(const Vector6d& v, const Vector6d& f) {
  const Vector3d vO = v.head<3>(), w = v.tail<3>();
  const Vector3d fl = f.head<3>(), nO = f.tail<3>();
  Vector6d out;
  out.head<3>() = w.cross(fl);
  out.tail<3>() = w.cross(nO) + vO.cross(fl);
  return out;
}

// Per-DOF data in world coordinates.
struct DofColumns {
  Eigen::Matrix<double, 6, Eigen::Dynamic> S;      // motion subspace columns
  Eigen::Matrix<double, 6, Eigen::Dynamic> Sdot;   // their rates (needs qd)
  std::vector<int> dof_link;                        // link each dof drives
};

// Motion subspace columns for all 6+n_j dofs given FK frames. If qd is
// non-null, also fills Sdot (used by RNEA).
DofColumns dof_columns(const RobotModel& model, const VectorXd& q, const FrameSet& fs,
                       const VectorXd* qd);

// Supporting-dof test: dof d moves link l.
bool dof_supports(const RobotModel& model, int dof, int link);

// Per-call topology table: parents, joints and dof-support mask.
struct Topology {
  std::vector<int> parent_of, joint_of;       // per link (-1 for base)
  std::vector<std::vector<char>> supports;    // [dof][link]
};
Topology topology(const RobotModel& model);

// Chain of ancestor joints (joint indices) from link up to base.
std::vector<int> joint_chain(const RobotModel& model, int link);

Matrix3d rpy_rate_map_dot(const Vector3d& rpy, const Vector3d& rpyd);

}  // namespace vfmpc::tree
