#include "vfmpc/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vfmpc {

using nlohmann::json;

std::vector<int> RobotModel::active_dofs() const {
  std::vector<int> idx;
  if (planar) {
    idx = {0, 2, 4};  // x, z, pitch
  } else {
    idx = {0, 1, 2, 3, 4, 5};
  }
  for (int j = 0; j < n_j(); ++j) idx.push_back(6 + j);
  return idx;
}

int RobotModel::contact_index(const std::string& cname) const {
  for (int i = 0; i < n_contacts(); ++i)
    if (contacts[i].name == cname) return i;
  return -1;
}

int RobotModel::joint_index(const std::string& jname) const {
  for (int i = 0; i < n_j(); ++i)
    if (joints[i].name == jname) return i;
  return -1;
}

int RobotModel::link_index(const std::string& lname) const {
  for (size_t i = 0; i < links.size(); ++i)
    if (links[i].name == lname) return static_cast<int>(i);
  return -1;
}

void RobotModel::validate() const {
  VFMPC_CHECK(!links.empty(), "model has no links");
  std::vector<bool> reached(links.size(), false);
  reached[0] = true;
  for (const auto& j : joints) {
    VFMPC_CHECK(j.parent >= 0 && j.parent < static_cast<int>(links.size()), "joint parent out of range");
    VFMPC_CHECK(j.child > 0 && j.child < static_cast<int>(links.size()), "joint child out of range");
    VFMPC_CHECK(reached[j.parent], "joint parent must precede child in topological order");
    VFMPC_CHECK(!reached[j.child], "kinematic loop or duplicate child link");
    reached[j.child] = true;
  }
  for (bool r : reached) VFMPC_CHECK(r, "disconnected link");
  for (const auto& c : contacts)
    VFMPC_CHECK(c.link >= 0 && c.link < static_cast<int>(links.size()), "contact link out of range");
}

namespace {

Vector3d vec3(const json& a) {
  VFMPC_CHECK(a.is_array() && a.size() == 3, "expected 3-vector");
  return Vector3d(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

Matrix3d inertia_from_json(const json& l) {
  Matrix3d I = Matrix3d::Zero();
  if (l.contains("inertia_diag")) {
    const Vector3d d = vec3(l["inertia_diag"]);
    I = d.asDiagonal();
  } else if (l.contains("inertia")) {
    const auto& m = l["inertia"];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) I(r, c) = m[r][c].get<double>();
  }
  return I;
}

}  // namespace

RobotModel parse_robot_model(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(std::string("model JSON parse error: ") + e.what());
  }
  RobotModel m;
  m.name = doc.value("name", "robot");
  m.planar = doc.value("planar", false);

  for (const auto& l : doc.at("links")) {
    LinkSpec ls;
    ls.name = l.at("name").get<std::string>();
    ls.mass = l.at("mass").get<double>();
    ls.com = l.contains("com") ? vec3(l["com"]) : Vector3d::Zero();
    ls.inertia = inertia_from_json(l);
    m.links.push_back(ls);
  }
  for (const auto& j : doc.at("joints")) {
    JointSpec js;
    js.name = j.at("name").get<std::string>();
    js.parent = m.link_index(j.at("parent").get<std::string>());
    js.child = m.link_index(j.at("child").get<std::string>());
    VFMPC_CHECK(js.parent >= 0 && js.child >= 0, "joint references unknown link: " + js.name);
    js.axis = vec3(j.at("axis"));
    js.axis.normalize();
    js.origin = j.contains("origin") ? vec3(j["origin"]) : Vector3d::Zero();
    if (j.contains("limits")) {
      js.q_min = j["limits"][0].get<double>();
      js.q_max = j["limits"][1].get<double>();
    }
    js.tau_max = j.value("tau_max", 1e9);
    m.joints.push_back(js);
  }
  for (const auto& c : doc.at("contacts")) {
    ContactSpec cs;
    cs.name = c.at("name").get<std::string>();
    cs.link = m.link_index(c.at("link").get<std::string>());
    VFMPC_CHECK(cs.link >= 0, "contact references unknown link: " + cs.name);
    cs.offset = c.contains("offset") ? vec3(c["offset"]) : Vector3d::Zero();
    m.contacts.push_back(cs);
  }
  if (doc.contains("legs")) {
    const auto& lg = doc["legs"];
    m.legs.l1 = lg.value("l1", 0.22);
    m.legs.l2 = lg.value("l2", 0.22);
    m.legs.l_f = lg.value("l_f", 0.0);
    m.legs.r21_y = lg.value("r21_y", 0.0);
    if (lg.contains("r_c1_left")) m.legs.r_c1_left = vec3(lg["r_c1_left"]);
    if (lg.contains("r_c1_right")) m.legs.r_c1_right = vec3(lg["r_c1_right"]);
  }
  m.validate();
  return m;
}

RobotModel load_robot_model(const std::string& json_path) {
  std::ifstream f(json_path);
  VFMPC_CHECK(f.good(), "cannot open model file: " + json_path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_robot_model(ss.str());
}

}  // namespace vfmpc
