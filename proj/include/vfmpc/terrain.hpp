#pragma once

#include <string>
#include <vector>

#include "vfmpc/core.hpp"

namespace vfmpc {

enum class AllowedFeet { Both, Left, Right, None };

struct TerrainPatch {
  double x_start = -1e9;
  double x_end = 1e9;
  double height = 0.0;
  AllowedFeet allowed = AllowedFeet::Both;
};

/// Piecewise-flat terrain as ordered, non-overlapping patches along x.
/// Gaps are patches with allowed = none and a sunken height.
struct Terrain {
  std::vector<TerrainPatch> patches;

  double height_at(double x) const;
  const TerrainPatch* patch_at(double x) const;
  bool foot_allowed(double x, int foot) const;  // foot: 0 = left, 1 = right

  /// Maximal interval of allowed ground around/near [lo, hi] for a foot.
  /// Returns all allowed intervals intersecting [lo, hi].
  std::vector<std::pair<double, double>> allowed_intervals(double lo, double hi, int foot) const;

  void validate() const;
  static Terrain flat(double height = 0.0);
};

Terrain load_terrain(const std::string& json_path);
Terrain parse_terrain(const std::string& json_text);

}  // namespace vfmpc
