#pragma once

#include <cmath>

namespace flocklab::detail {

inline double minmod(double a, double b) {
  if (a > 0.0 && b > 0.0) return a < b ? a : b;
  if (a < 0.0 && b < 0.0) return a > b ? a : b;
  return 0.0;
}

/// Signed minimal-image difference on a torus of period L.
inline double torus_delta(double d, double L) {
  d = std::fmod(d, L);
  if (d > 0.5 * L) d -= L;
  if (d < -0.5 * L) d += L;
  return d;
}

inline double torus_dist(double a, double b, double L) {
  return std::abs(torus_delta(a - b, L));
}

}  // namespace flocklab::detail
