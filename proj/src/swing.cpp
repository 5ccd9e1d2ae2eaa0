#include "vfmpc/swing.hpp"

namespace vfmpc {

SwingSample swing_trajectory(const Vector3d& liftoff, const Vector3d& target, double phase,
                             double apex) {
  const double s = clamp(phase, 0.0, 1.0);
  // Quintic blend: 6s^5 - 15s^4 + 10s^3, zero velocity and acceleration at
  // both ends.
  const double b = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
  const double bd = 30.0 * s * s * (1.0 - s) * (1.0 - s);
  SwingSample out;
  out.pos = liftoff + b * (target - liftoff);
  out.vel = bd * (target - liftoff);
  // Vertical bump on top of the endpoint interpolation; sin^2 keeps the
  // end velocities zero.
  const double sp = std::sin(M_PI * s);
  out.pos.z() += apex * sp * sp;
  out.vel.z() += apex * M_PI * std::sin(2.0 * M_PI * s);
  return out;
}

}  // namespace vfmpc
