#pragma once

#include <string>
#include <vector>

#include "vfmpc/core.hpp"

namespace vfmpc {

struct LinkSpec {
  std::string name;
  double mass = 0.0;
  Matrix3d inertia = Matrix3d::Zero();  // about link CoM, link frame
  Vector3d com = Vector3d::Zero();      // CoM offset in link frame
};

struct JointSpec {
  std::string name;
  int parent = -1;  // parent link index
  int child = -1;   // child link index
  Vector3d axis = Vector3d::UnitY();
  Vector3d origin = Vector3d::Zero();  // joint position in parent frame
  double q_min = -3.0, q_max = 3.0;
  double tau_max = 1e9;
};

struct ContactSpec {
  std::string name;
  int link = -1;
  Vector3d offset = Vector3d::Zero();  // contact point in link frame
};

struct LegGeometry {
  double l1 = 0.22, l2 = 0.22;
  double l_f = 0.0;       // foot length; 0 = point foot
  double r21_y = 0.0;     // y-offset joint 2 from joint 1 (3-D leg)
  Vector3d r_c1_left = Vector3d::Zero();   // body-frame CoM -> joint 1
  Vector3d r_c1_right = Vector3d::Zero();
};

/// Kinematic + inertial description of a robot as a floating-base tree.
/// Link 0 is the base. Planar models keep the full spatial coordinate
/// layout q = [pos(3); rpy(3); joints] and mark the out-of-plane
/// coordinates inactive, so one spatial math core serves 2-D and 3-D.
struct RobotModel {
  std::string name;
  bool planar = false;
  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;   // topologically ordered
  std::vector<ContactSpec> contacts;
  LegGeometry legs;

  int n_j() const { return static_cast<int>(joints.size()); }
  int n_q() const { return 6 + n_j(); }
  int n_contacts() const { return static_cast<int>(contacts.size()); }

  double total_mass() const {
    double m = 0.0;
    for (const auto& l : links) m += l.mass;
    return m;
  }

  /// Indices of coordinates that move for this model. Planar: x, z, pitch
  /// and all joints; spatial: everything.
  std::vector<int> active_dofs() const;

  int contact_index(const std::string& cname) const;
  int joint_index(const std::string& jname) const;
  int link_index(const std::string& lname) const;

  void validate() const;  // mass budget, tree ordering
};

/// Generalized-coordinate state in spatial form. For planar models the
/// y/roll/yaw entries are exactly zero.
struct GenCoordState {
  VectorXd q;
  VectorXd qd;

  GenCoordState() = default;
  GenCoordState(int n) : q(VectorXd::Zero(n)), qd(VectorXd::Zero(n)) {}
};

RobotModel load_robot_model(const std::string& json_path);
RobotModel parse_robot_model(const std::string& json_text);

}  // namespace vfmpc
