#include "vfmpc/terrain.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vfmpc {

using nlohmann::json;

double Terrain::height_at(double x) const {
  const TerrainPatch* p = patch_at(x);
  return p ? p->height : 0.0;
}

const TerrainPatch* Terrain::patch_at(double x) const {
  for (const auto& p : patches)
    if (x >= p.x_start && x < p.x_end) return &p;
  return nullptr;
}

bool Terrain::foot_allowed(double x, int foot) const {
  const TerrainPatch* p = patch_at(x);
  if (!p) return true;  // off the defined course: unrestricted flat ground
  switch (p->allowed) {
    case AllowedFeet::Both: return true;
    case AllowedFeet::Left: return foot == 0;
    case AllowedFeet::Right: return foot == 1;
    case AllowedFeet::None: return false;
  }
  return true;
}

std::vector<std::pair<double, double>> Terrain::allowed_intervals(double lo, double hi, int foot) const {
  std::vector<std::pair<double, double>> out;
  // Walk boundaries: patch edges partition [lo, hi].
  std::vector<double> cuts{lo, hi};
  for (const auto& p : patches) {
    if (p.x_start > lo && p.x_start < hi) cuts.push_back(p.x_start);
    if (p.x_end > lo && p.x_end < hi) cuts.push_back(p.x_end);
  }
  std::sort(cuts.begin(), cuts.end());
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] - cuts[i] < 1e-12) continue;
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    if (foot_allowed(mid, foot)) {
      if (!out.empty() && std::abs(out.back().second - cuts[i]) < 1e-12)
        out.back().second = cuts[i + 1];
      else
        out.emplace_back(cuts[i], cuts[i + 1]);
    }
  }
  return out;
}

void Terrain::validate() const {
  for (size_t i = 1; i < patches.size(); ++i) {
    VFMPC_CHECK(patches[i].x_start >= patches[i - 1].x_end - 1e-12,
                "terrain patches must be ordered and non-overlapping");
  }
}

Terrain Terrain::flat(double height) {
  Terrain t;
  t.patches.push_back({-1e9, 1e9, height, AllowedFeet::Both});
  return t;
}

Terrain parse_terrain(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(std::string("terrain JSON parse error: ") + e.what());
  }
  Terrain t;
  for (const auto& p : doc.at("patches")) {
    TerrainPatch tp;
    tp.x_start = p.at("x_start").get<double>();
    tp.x_end = p.at("x_end").get<double>();
    tp.height = p.value("height", 0.0);
    const std::string a = p.value("allowed_feet", "both");
    if (a == "both") tp.allowed = AllowedFeet::Both;
    else if (a == "left") tp.allowed = AllowedFeet::Left;
    else if (a == "right") tp.allowed = AllowedFeet::Right;
    else if (a == "none") tp.allowed = AllowedFeet::None;
    else throw Error("terrain: unknown allowed_feet value: " + a);
    t.patches.push_back(tp);
  }
  std::sort(t.patches.begin(), t.patches.end(),
            [](const TerrainPatch& a, const TerrainPatch& b) { return a.x_start < b.x_start; });
  t.validate();
  return t;
}

Terrain load_terrain(const std::string& json_path) {
  std::ifstream f(json_path);
  VFMPC_CHECK(f.good(), "cannot open terrain file: " + json_path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_terrain(ss.str());
}

}  // namespace vfmpc
