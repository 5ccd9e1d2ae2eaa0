#include "vfmpc/mpc_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vfmpc {

using nlohmann::json;

ContactSchedule ContactSchedule::walking(int stance_foot, int elapsed, int h, int h_swing) {
  ContactSchedule cs;
  cs.h = h;
  cs.h_swing = h_swing;
  cs.stance_foot = stance_foot;
  cs.elapsed = elapsed;
  cs.sigma.setZero(2, h);
  for (int k = 0; k < h; ++k) {
    const int step = (elapsed + k) / h_swing;      // footsteps ahead of now
    const int foot = (step % 2 == 0) ? stance_foot : 1 - stance_foot;
    cs.sigma(foot, k) = 1;
  }
  return cs;
}

ContactSchedule ContactSchedule::standing(int h, int h_swing) {
  ContactSchedule cs;
  cs.h = h;
  cs.h_swing = h_swing;
  cs.stance_foot = -1;
  cs.sigma.setOnes(2, h);
  return cs;
}

namespace {

// Planar tables list in-plane entries only; spread them into the lifted
// 3-D layout (x, z for vectors; lx, lz, ky for momenta).
VectorXd read_weight(const json& j, const char* key, int full_dim) {
  if (!j.contains(key)) return VectorXd::Zero(full_dim);
  std::vector<double> v = j.at(key).get<std::vector<double>>();
  VectorXd out = VectorXd::Zero(full_dim);
  if (static_cast<int>(v.size()) == full_dim) {
    for (int i = 0; i < full_dim; ++i) out[i] = v[i];
  } else if (full_dim == 6 && v.size() == 3) {
    out[0] = v[0];  // l_x
    out[2] = v[1];  // l_z
    out[4] = v[2];  // k_y
  } else if (full_dim == 3 && v.size() == 2) {
    out[0] = v[0];  // x
    out[2] = v[1];  // z
  } else {
    throw Error(std::string("config: unexpected length for ") + key);
  }
  return out;
}

}  // namespace

MpcConfig parse_mpc_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(std::string("config JSON parse error: ") + e.what());
  }
  MpcConfig c;
  c.weights.L1_h = read_weight(doc, "L1_h", 6);
  c.weights.L1_H = read_weight(doc, "L1_H", 6);
  c.weights.L1_pf = read_weight(doc, "L1_pf", 3);
  c.weights.L1_pc = read_weight(doc, "L1_pc", 3);
  c.weights.L2_f = read_weight(doc, "L2_f", 3);
  c.weights.L2_tau = read_weight(doc, "L2_tau", 3);
  c.h = doc.value("h", 10);
  c.h_swing = doc.value("h_swing", c.h / 2);
  c.dt_min = doc.value("dt_min", 0.03);
  c.dt_max = doc.value("dt_max", 0.06);
  c.dt_nominal = doc.value("dt_nominal", 0.05);
  c.mass = doc.value("mass", 10.0);
  c.bounds.mu = doc.value("mu", 0.7);
  c.bounds.f_min = doc.value("f_min", 10.0);
  c.bounds.f_max = doc.value("f_max", 250.0);
  c.bounds.foot_half_length = doc.value("l_f", 0.0) / 2.0;
  c.tols.j_max = doc.value("j_max", 50);
  c.tols.eta_pos = doc.value("eta_pos", 1e-5);
  c.tols.eta_f = doc.value("eta_f", 1e-2);
  c.tols.eta_tau = doc.value("eta_tau", 1e-3);
  c.com_height = doc.value("com_height", 0.50);
  c.capture_gain = doc.value("capture_gain", 0.10);
  c.swing_apex = doc.value("swing_apex", 0.06);
  c.reach_x = doc.value("reach_x", 0.35);
  c.reach_z_nominal = doc.value("reach_z_nominal", 0.50);
  c.reach_z_band = doc.value("reach_z_band", 0.15);
  c.kp_swing = doc.value("kp_swing", 120.0);
  c.kd_swing = doc.value("kd_swing", 2.4);
  c.prox_wrench = doc.value("prox_wrench", 1e-3);
  VFMPC_CHECK(c.dt_min > 0 && c.dt_min < c.dt_max, "config: bad dt range");
  VFMPC_CHECK(c.tols.j_max > 0 && c.tols.eta_pos > 0 && c.tols.eta_f > 0 && c.tols.eta_tau > 0,
              "config: tolerances must be positive");
  return c;
}

MpcConfig load_mpc_config(const std::string& json_path) {
  std::ifstream f(json_path);
  VFMPC_CHECK(f.good(), "cannot open config file: " + json_path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_mpc_config(ss.str());
}

}  // namespace vfmpc
