#pragma once

#include <algorithm>
#include <cmath>

namespace camel::nn {

inline constexpr double kProbClamp = 1e-7;

/// -(y ln p + (1 - y) ln(1 - p)) with p clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(double p, double y) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

/// d bce_loss / dp; zero where the clamp is active.
inline double bce_grad(double p, double y) {
  if (p <= kProbClamp || p >= 1.0 - kProbClamp) return 0.0;
  return -y / p + (1.0 - y) / (1.0 - p);
}

}  // namespace camel::nn
