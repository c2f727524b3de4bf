#include "camel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace camel::nn {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// ReLU masks and pool winners of one forward pass. Central differences are
// only meaningful when both probes stay on the same piece as the base point.
std::vector<int> piece_signature(const Network<double>& net, const TensorD& batch) {
  Tape<double> tape;
  net.forward(batch, tape);
  std::vector<int> sig;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    if (net.layers()[li].kind == LayerKind::Relu) {
      for (const double v : tape.activations[li].values()) sig.push_back(v > 0.0);
    } else if (net.layers()[li].kind == LayerKind::MaxPool2d) {
      sig.insert(sig.end(), tape.argmax[li].begin(), tape.argmax[li].end());
    }
  }
  return sig;
}

}  // namespace

GradCheckResult compare_gradients(const Network<double>& model, const TensorD& batch, const TensorD& targets,
                                  const ParamList<double>& analytic, double eps, Rng& rng, std::size_t min_coords) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  Network<double> probe = model;
  auto& params = probe.params();
  GradCheckResult result;
  if (params.empty()) return result;
  const std::size_t per_tensor = std::max<std::size_t>(4, (min_coords + params.size() - 1) / params.size());
  const std::vector<int> base = piece_signature(probe, batch);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].value.values();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t j = 0; j < coords.size(); ++j) coords[j] = j;
    rng.shuffle(coords.begin(), coords.end());
    std::size_t checked = 0;
    for (const std::size_t j : coords) {
      if (checked == per_tensor) break;
      const double saved = values[j];
      values[j] = saved + eps;
      const double up = bce_sum(probe.forward(batch), targets);
      const bool up_same = piece_signature(probe, batch) == base;
      values[j] = saved - eps;
      const double down = bce_sum(probe.forward(batch), targets);
      const bool down_same = piece_signature(probe, batch) == base;
      values[j] = saved;
      if (!up_same || !down_same) {
        ++result.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * eps);
      result.max_error = std::max(result.max_error, relative_error(analytic[pi].value[j], numeric));
      ++checked;
      ++result.checked;
    }
  }
  return result;
}

double grad_check(const Network<double>& model, const TensorD& batch, const TensorD& targets, double eps, Rng& rng,
                  std::size_t min_coords) {
  Tape<double> tape;
  model.forward(batch, tape);
  auto grads = model.zero_grads();
  bce_backward<double>(model, tape, targets, {}, grads);
  return compare_gradients(model, batch, targets, grads, eps, rng, min_coords).max_error;
}

}  // namespace camel::nn
