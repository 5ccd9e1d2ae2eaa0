#pragma once

#include "vfmpc/core.hpp"

namespace vfmpc {

struct SwingSample {
  Vector3d pos;
  Vector3d vel;  // per unit phase; divide by swing duration for m/s
};

/// Smooth swing-foot interpolation: quintic in the horizontal components
/// (zero end velocity/acceleration), sine bump of the given apex in z.
/// Retargeting mid-swing stays continuous because the curve is re-evaluated
/// from the stored liftoff each call.
SwingSample swing_trajectory(const Vector3d& liftoff, const Vector3d& target, double phase,
                             double apex = 0.06);

}  // namespace vfmpc
