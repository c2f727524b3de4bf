#pragma once

#include "camel/network.hpp"
#include "camel/rng.hpp"

namespace camel::nn {

/// Relative error with the denominator guarded by max(|a|, |b|, 1e-8).
double relative_error(double analytic, double numeric);

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes that crossed a ReLU or pooling kink
};

/// Compares `analytic` against central differences of the sum-BCE loss over a
/// random subsample of parameter coordinates (every parameter tensor is
/// visited; at least `min_coords` coordinates overall). A coordinate whose
/// probes move any ReLU mask or pool winner is skipped, since the loss is not
/// differentiable between them.
GradCheckResult compare_gradients(const Network<double>& model, const TensorD& batch, const TensorD& targets,
                                  const ParamList<double>& analytic, double eps, Rng& rng,
                                  std::size_t min_coords = 64);

/// Analytic sum-BCE gradients checked against finite differences.
double grad_check(const Network<double>& model, const TensorD& batch, const TensorD& targets, double eps, Rng& rng,
                  std::size_t min_coords = 64);

}  // namespace camel::nn
