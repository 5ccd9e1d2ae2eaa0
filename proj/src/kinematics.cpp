#include "vfmpc/kinematics.hpp"

#include <Eigen/Geometry>

#include "tree_core.hpp"

namespace vfmpc {

Matrix3d rpy_to_rotation(const Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vector3d::UnitX()))
      .toRotationMatrix();
}

// w = E(rpy) * rpyd for R = Rz Ry Rx, columns (roll, pitch, yaw).
Matrix3d rpy_rate_map(const Vector3d& rpy) {
  const double ct = std::cos(rpy.y()), st = std::sin(rpy.y());
  const double cp = std::cos(rpy.z()), sp = std::sin(rpy.z());
  Matrix3d E;
  E.col(0) = Vector3d(cp * ct, sp * ct, -st);
  E.col(1) = Vector3d(-sp, cp, 0.0);
  E.col(2) = Vector3d::UnitZ();
  return E;
}

namespace tree {

Matrix3d rpy_rate_map_dot(const Vector3d& rpy, const Vector3d& rpyd) {
  const double ct = std::cos(rpy.y()), st = std::sin(rpy.y());
  const double cp = std::cos(rpy.z()), sp = std::sin(rpy.z());
  const double td = rpyd.y(), pd = rpyd.z();
  Matrix3d Ed;
  Ed.col(0) = Vector3d(-sp * pd * ct - cp * st * td, cp * pd * ct - sp * st * td, -ct * td);
  Ed.col(1) = Vector3d(-cp * pd, -sp * pd, 0.0);
  Ed.col(2) = Vector3d::Zero();
  return Ed;
}

std::vector<int> joint_chain(const RobotModel& model, int link) {
  std::vector<int> chain;
  int cur = link;
  while (cur != 0) {
    int jidx = -1;
    for (int j = 0; j < model.n_j(); ++j)
      if (model.joints[j].child == cur) {
        jidx = j;
        break;
      }
    VFMPC_CHECK(jidx >= 0, "link not connected to base");
    chain.push_back(jidx);
    cur = model.joints[jidx].parent;
  }
  return chain;
}

Topology topology(const RobotModel& model) {
  const size_t nl = model.links.size();
  Topology t;
  t.parent_of.assign(nl, -1);
  t.joint_of.assign(nl, -1);
  for (int j = 0; j < model.n_j(); ++j) {
    t.parent_of[model.joints[j].child] = model.joints[j].parent;
    t.joint_of[model.joints[j].child] = j;
  }
  t.supports.assign(model.n_q(), std::vector<char>(nl, 0));
  for (int d = 0; d < 6; ++d) t.supports[d].assign(nl, 1);
  for (size_t l = 1; l < nl; ++l) {
    int cur = static_cast<int>(l);
    while (cur != 0) {
      t.supports[6 + t.joint_of[cur]][l] = 1;
      cur = t.parent_of[cur];
    }
  }
  return t;
}

bool dof_supports(const RobotModel& model, int dof, int link) {
  if (dof < 6) return true;
  const int j = dof - 6;
  int cur = link;
  while (cur != 0) {
    int jidx = -1;
    for (int k = 0; k < model.n_j(); ++k)
      if (model.joints[k].child == cur) {
        jidx = k;
        break;
      }
    if (jidx == j) return true;
    cur = model.joints[jidx].parent;
  }
  return false;
}

DofColumns dof_columns(const RobotModel& model, const VectorXd& q, const FrameSet& fs,
                       const VectorXd* qd) {
  const int n = model.n_q();
  DofColumns dc;
  dc.S.setZero(6, n);
  dc.dof_link.assign(n, 0);
  const Vector3d p0 = q.head<3>();
  const Vector3d rpy = q.segment<3>(3);
  const Matrix3d E = rpy_rate_map(rpy);

  for (int a = 0; a < 3; ++a) {
    dc.S.col(a).head<3>() = Vector3d::Unit(a);  // base translation
    dc.dof_link[a] = 0;
  }
  for (int a = 0; a < 3; ++a) {  // base rotation about base point
    const Vector3d w = E.col(a);
    dc.S.col(3 + a).head<3>() = -w.cross(p0);
    dc.S.col(3 + a).tail<3>() = w;
    dc.dof_link[3 + a] = 0;
  }
  for (int j = 0; j < model.n_j(); ++j) {
    const Vector3d a = fs.joint_axis[j];
    const Vector3d o = fs.joint_pos[j];
    dc.S.col(6 + j).head<3>() = -a.cross(o);
    dc.S.col(6 + j).tail<3>() = a;
    dc.dof_link[6 + j] = model.joints[j].child;
  }

  if (qd) {
    dc.Sdot.setZero(6, n);
    // Link twists are needed for the rates.
    const Topology topo = topology(model);
    std::vector<Vector6d> v(model.links.size(), Vector6d::Zero());
    for (int d = 0; d < 6; ++d) v[0] += dc.S.col(d) * (*qd)[d];
    for (size_t l = 1; l < model.links.size(); ++l)
      v[l] = v[topo.parent_of[l]] + dc.S.col(6 + topo.joint_of[l]) * (*qd)[6 + topo.joint_of[l]];
    const Vector3d v0 = qd->head<3>();
    const Matrix3d Ed = rpy_rate_map_dot(rpy, qd->segment<3>(3));
    for (int a = 0; a < 3; ++a) {
      const Vector3d w = E.col(a), wd = Ed.col(a);
      dc.Sdot.col(3 + a).head<3>() = -(wd.cross(p0) + w.cross(v0));
      dc.Sdot.col(3 + a).tail<3>() = wd;
    }
    for (int j = 0; j < model.n_j(); ++j) {
      const int parent = model.joints[j].parent;
      const Vector3d a = fs.joint_axis[j];
      const Vector3d o = fs.joint_pos[j];
      const Vector3d wp = v[parent].tail<3>();
      const Vector3d ad = wp.cross(a);
      const Vector3d od = v[parent].head<3>() + wp.cross(o);  // anchor is parent-fixed
      dc.Sdot.col(6 + j).head<3>() = -(ad.cross(o) + a.cross(od));
      dc.Sdot.col(6 + j).tail<3>() = ad;
    }
  }
  return dc;
}

}  // namespace tree

FrameSet forward_kinematics(const RobotModel& model, const VectorXd& q) {
  VFMPC_CHECK(q.size() == model.n_q(), "forward_kinematics: q dimension mismatch");
  FrameSet fs;
  fs.link.resize(model.links.size());
  fs.link[0].p = q.head<3>();
  fs.link[0].R = rpy_to_rotation(q.segment<3>(3));
  fs.joint_pos.resize(model.n_j());
  fs.joint_axis.resize(model.n_j());
  for (int j = 0; j < model.n_j(); ++j) {
    const auto& js = model.joints[j];
    const FramePose& P = fs.link[js.parent];
    const Vector3d anchor = P.p + P.R * js.origin;
    const Matrix3d Rj = P.R * Eigen::AngleAxisd(q[6 + j], js.axis).toRotationMatrix();
    fs.link[js.child].p = anchor;
    fs.link[js.child].R = Rj;
    fs.joint_pos[j] = anchor;
    fs.joint_axis[j] = P.R * js.axis;
  }
  fs.contact.resize(model.n_contacts());
  for (int c = 0; c < model.n_contacts(); ++c) {
    const auto& cs = model.contacts[c];
    fs.contact[c] = fs.link[cs.link].p + fs.link[cs.link].R * cs.offset;
  }
  return fs;
}

Vector3d com_position(const RobotModel& model, const VectorXd& q) {
  const FrameSet fs = forward_kinematics(model, q);
  Vector3d num = Vector3d::Zero();
  double msum = 0.0;
  for (size_t l = 0; l < model.links.size(); ++l) {
    const Vector3d c = fs.link[l].p + fs.link[l].R * model.links[l].com;
    num += model.links[l].mass * c;
    msum += model.links[l].mass;
  }
  return num / msum;
}

MatrixXd point_jacobian(const RobotModel& model, const VectorXd& q, int link, const Vector3d& offset) {
  const FrameSet fs = forward_kinematics(model, q);
  const Vector3d p = fs.link[link].p + fs.link[link].R * offset;
  const tree::DofColumns dc = tree::dof_columns(model, q, fs, nullptr);
  const tree::Topology topo = tree::topology(model);
  MatrixXd J = MatrixXd::Zero(6, model.n_q());
  for (int d = 0; d < model.n_q(); ++d) {
    if (!topo.supports[d][link]) continue;
    const Vector3d vO = dc.S.col(d).head<3>(), w = dc.S.col(d).tail<3>();
    J.col(d).head<3>() = vO + w.cross(p);
    J.col(d).tail<3>() = w;
  }
  return J;
}

MatrixXd contact_jacobian(const RobotModel& model, const VectorXd& q, int contact_id) {
  VFMPC_CHECK(contact_id >= 0 && contact_id < model.n_contacts(), "unknown contact id");
  const auto& cs = model.contacts[contact_id];
  return point_jacobian(model, q, cs.link, cs.offset);
}

MatrixXd mass_matrix_spatial(const RobotModel& model, const VectorXd& q) {
  VFMPC_CHECK(q.size() == model.n_q(), "mass_matrix: q dimension mismatch");
  const int n = model.n_q();
  const FrameSet fs = forward_kinematics(model, q);
  const tree::DofColumns dc = tree::dof_columns(model, q, fs, nullptr);

  // Composite inertia of each link subtree about the world origin.
  std::vector<tree::SpatialInertia> IC(model.links.size());
  for (size_t l = 0; l < model.links.size(); ++l) {
    const Vector3d c = fs.link[l].p + fs.link[l].R * model.links[l].com;
    const Matrix3d Ic_w = fs.link[l].R * model.links[l].inertia * fs.link[l].R.transpose();
    IC[l] = tree::body_inertia_at_origin(model.links[l].mass, c, Ic_w);
  }
  for (int j = model.n_j() - 1; j >= 0; --j) IC[model.joints[j].parent] += IC[model.joints[j].child];

  MatrixXd M = MatrixXd::Zero(n, n);
  // Base block: composite of the whole robot.
  for (int a = 0; a < 6; ++a) {
    const Vector6d F = IC[0].apply(dc.S.col(a));
    for (int b = 0; b < 6; ++b) M(a, b) = dc.S.col(b).dot(F);
  }
  // Joint rows: F_j = IC(child_j) s_j against every supporting dof.
  for (int j = 0; j < model.n_j(); ++j) {
    const int child = model.joints[j].child;
    const Vector6d F = IC[child].apply(dc.S.col(6 + j));
    for (int b = 0; b < 6; ++b) {
      M(6 + j, b) = dc.S.col(b).dot(F);
      M(b, 6 + j) = M(6 + j, b);
    }
    M(6 + j, 6 + j) = dc.S.col(6 + j).dot(F);
    for (int a : tree::joint_chain(model, model.joints[j].parent)) {
      M(6 + j, 6 + a) = dc.S.col(6 + a).dot(F);
      M(6 + a, 6 + j) = M(6 + j, 6 + a);
    }
  }
  return M;
}

VectorXd inverse_dynamics_spatial(const RobotModel& model, const VectorXd& q, const VectorXd& qd,
                                  const VectorXd& qdd) {
  const int n = model.n_q();
  VFMPC_CHECK(q.size() == n && qd.size() == n && qdd.size() == n, "inverse_dynamics: dimension mismatch");
  const FrameSet fs = forward_kinematics(model, q);
  const tree::DofColumns dc = tree::dof_columns(model, q, fs, &qd);

  const size_t nl = model.links.size();
  std::vector<Vector6d> v(nl, Vector6d::Zero()), a(nl, Vector6d::Zero());
  Vector6d a_grav = Vector6d::Zero();
  a_grav.head<3>() = Vector3d(0, 0, kGravity);  // -g moved to the left-hand side

  const tree::Topology topo = tree::topology(model);
  const std::vector<int>& parent_of = topo.parent_of;
  const std::vector<int>& joint_of = topo.joint_of;

  // Base link: six base dofs.
  for (int d = 0; d < 6; ++d) {
    v[0] += dc.S.col(d) * qd[d];
    a[0] += dc.S.col(d) * qdd[d] + dc.Sdot.col(d) * qd[d];
  }
  a[0] += a_grav;
  for (size_t l = 1; l < nl; ++l) {
    const int p = parent_of[l], d = 6 + joint_of[l];
    v[l] = v[p] + dc.S.col(d) * qd[d];
    a[l] = a[p] + dc.S.col(d) * qdd[d] + dc.Sdot.col(d) * qd[d];
  }

  std::vector<Vector6d> f(nl);
  for (size_t l = 0; l < nl; ++l) {
    const Vector3d c = fs.link[l].p + fs.link[l].R * model.links[l].com;
    const Matrix3d Ic_w = fs.link[l].R * model.links[l].inertia * fs.link[l].R.transpose();
    const tree::SpatialInertia I = tree::body_inertia_at_origin(model.links[l].mass, c, Ic_w);
    f[l] = I.apply(a[l]) + tree::cross_force(v[l], I.apply(v[l]));
  }
  for (size_t l = nl - 1; l >= 1; --l) f[parent_of[l]] += f[l];

  VectorXd tau(n);
  for (int d = 0; d < 6; ++d) tau[d] = dc.S.col(d).dot(f[0]);
  for (int j = 0; j < model.n_j(); ++j) tau[6 + j] = dc.S.col(6 + j).dot(f[model.joints[j].child]);
  return tau;
}

CentroidalQuantities centroidal_momentum(const RobotModel& model, const VectorXd& q, const VectorXd& qd) {
  const int n = model.n_q();
  VFMPC_CHECK(q.size() == n && qd.size() == n, "centroidal_momentum: dimension mismatch");

  auto A_of = [&](const VectorXd& qq) -> MatrixXd {
    const MatrixXd M = mass_matrix_spatial(model, qq);
    const Matrix3d E = rpy_rate_map(qq.segment<3>(3));
    const Vector3d p_c = com_position(model, qq);
    const Vector3d p0 = qq.head<3>();
    MatrixXd A(6, n);
    A.topRows(3) = M.topRows(3);
    A.bottomRows(3) =
        E.transpose().inverse() * M.middleRows(3, 3) + skew(p0 - p_c) * M.topRows(3);
    return A;
  };

  CentroidalQuantities cq;
  cq.A_G = A_of(q);
  cq.p_c = com_position(model, q);
  cq.h = cq.A_G * qd;
  const double eps = 1e-6;
  cq.A_G_dot = (A_of(q + eps * qd) - A_of(q - eps * qd)) / (2.0 * eps);
  return cq;
}

CentroidalState joints_to_momenta(const RobotModel& model, const VectorXd& q, const VectorXd& qd) {
  const CentroidalQuantities cq = centroidal_momentum(model, q, qd);
  CentroidalState x;
  x.H = cq.A_G * q;
  x.h = cq.h;
  return x;
}

}  // namespace vfmpc
