#pragma once

#include <cstdint>

#include "camel/network.hpp"

namespace camel::nn {

enum class OptimKind { Adam, Sgd };

struct OptimState {
  OptimKind kind = OptimKind::Adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  static OptimState adam(double lr) {
    OptimState s;
    s.learning_rate = lr;
    return s;
  }
  static OptimState sgd(double lr) {
    OptimState s;
    s.kind = OptimKind::Sgd;
    s.learning_rate = lr;
    return s;
  }
};

/// One in-place update of `params` from `grads`. Adam moments are held in
/// double and allocated lazily on the first step.
template <class T>
void optim_step(ParamList<T>& params, const ParamList<T>& grads, OptimState& state);

}  // namespace camel::nn
