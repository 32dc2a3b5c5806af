#pragma once

#include <cmath>

#include "tensor.hpp"

namespace s3p {

// Green's function of the round-sphere Paneitz operator in the north chart.
inline double green_eval(const Vec3d& x, const Vec3d& y) {
  return -norm(x - y) / (4 * M_PI * std::sqrt(norm2(x) + 1) * std::sqrt(norm2(y) + 1));
}

// G_N(x), pole at N (chart infinity)
inline double green_pole(const Vec3d& x) { return -1.0 / (4 * M_PI * std::sqrt(norm2(x) + 1)); }

// Round Laplacian of G_N. With s = |X - N| / 2 = 1 / sqrt(|x|^2 + 1):
// Delta G_N = 5 s / (16 pi) - 1 / (8 pi s).
inline double green_pole_laplacian(const Vec3d& x) {
  double s = 1.0 / std::sqrt(norm2(x) + 1);
  return 5 * s / (16 * M_PI) - 1 / (8 * M_PI * s);
}

}  // namespace s3p
