#include "camel/optim.hpp"

#include <cmath>

namespace camel::nn {

template <class T>
void optim_step(ParamList<T>& params, const ParamList<T>& grads, OptimState& state) {
  if (params.size() != grads.size()) throw ConfigError("optim_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.shape() != grads[i].value.shape()) {
      throw ConfigError("optim_step: gradient shape mismatch for " + params[i].name);
    }
  }
  ++state.step;
  if (state.kind == OptimKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].value.values();
      const auto& g = grads[i].value.values();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] = static_cast<T>(p[j] - state.learning_rate * g[j]);
    }
    return;
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value.size(), 0.0);
      state.second_moment.emplace_back(p.value.size(), 0.0);
    }
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value.values();
    const auto& g = grads[i].value.values();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      const double update = state.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.epsilon);
      p[j] = static_cast<T>(p[j] - update);
    }
  }
}

template void optim_step(ParamList<float>&, const ParamList<float>&, OptimState&);
template void optim_step(ParamList<double>&, const ParamList<double>&, OptimState&);

}  // namespace camel::nn
