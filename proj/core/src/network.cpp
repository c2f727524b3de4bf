#include "camel/network.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

#include "camel/loss.hpp"

namespace camel {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace camel

namespace camel::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::GlobalAvgPool: return "globalavgpool";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::UpsampleNearest: return "upsample-nearest";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv2d(int in, int out, int kernel, int stride) {
  return {LayerKind::Conv2d, in, out, kernel, stride};
}
LayerSpec LayerSpec::maxpool2d(int size) { return {LayerKind::MaxPool2d, 0, 0, size, size}; }
LayerSpec LayerSpec::global_avg_pool() { return {LayerKind::GlobalAvgPool, 0, 0, 1, 1}; }
LayerSpec LayerSpec::dense(int in, int out) { return {LayerKind::Dense, in, out, 1, 1}; }
LayerSpec LayerSpec::relu() { return {LayerKind::Relu, 0, 0, 1, 1}; }
LayerSpec LayerSpec::sigmoid() { return {LayerKind::Sigmoid, 0, 0, 1, 1}; }
LayerSpec LayerSpec::upsample_nearest(int factor) {
  return {LayerKind::UpsampleNearest, 0, 0, factor, factor};
}

void validate(const LayerSpec& spec) {
  const std::string name = to_string(spec.kind);
  if (spec.stride < 1) throw ConfigError(name + ": stride must be >= 1");
  switch (spec.kind) {
    case LayerKind::Conv2d:
      if (spec.kernel < 1 || spec.kernel % 2 == 0) throw ConfigError("conv2d: kernel size must be odd");
      [[fallthrough]];
    case LayerKind::Dense:
      if (spec.in_channels < 1 || spec.out_channels < 1) {
        throw ConfigError(name + ": channel counts must be >= 1");
      }
      break;
    case LayerKind::MaxPool2d:
    case LayerKind::UpsampleNearest:
      if (spec.kernel < 1) throw ConfigError(name + ": size must be >= 1");
      break;
    default:
      break;
  }
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

std::string layer_label(std::size_t i, const LayerSpec& spec) {
  return "layer " + std::to_string(i) + " (" + to_string(spec.kind) + ")";
}

int conv_out(int in, const LayerSpec& s) { return (in + 2 * (s.kernel / 2) - s.kernel) / s.stride + 1; }

// col has shape [C*k*k, Ho*Wo].
template <class T>
void im2col(const T* in, int c, int h, int w, const LayerSpec& s, int ho, int wo, T* col) {
  const int k = s.kernel;
  const int pad = k / 2;
  const int hw = ho * wo;
  for (int ch = 0; ch < c; ++ch) {
    const T* plane = in + static_cast<std::size_t>(ch) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + static_cast<std::size_t>((ch * k + ki) * k + kj) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride - pad + ki;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int c, int h, int w, const LayerSpec& s, int ho, int wo, T* in) {
  const int k = s.kernel;
  const int pad = k / 2;
  const int hw = ho * wo;
  for (int ch = 0; ch < c; ++ch) {
    T* plane = in + static_cast<std::size_t>(ch) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + static_cast<std::size_t>((ch * k + ki) * k + kj) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const T* src = row + oy * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_spatial(const Shape& s) { return s.size() == 4; }

}  // namespace

template <class T>
Network<T>::Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  first_param_.assign(layers_.size(), -1);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& s = layers_[i];
    validate(s);
    const std::string prefix = to_string(s.kind) + std::to_string(i);
    if (s.kind == LayerKind::Conv2d) {
      first_param_[i] = static_cast<int>(params_.size());
      params_.push_back({prefix + ".weight", BasicTensor<T>({s.out_channels, s.in_channels, s.kernel, s.kernel})});
      params_.push_back({prefix + ".bias", BasicTensor<T>({s.out_channels})});
    } else if (s.kind == LayerKind::Dense) {
      first_param_[i] = static_cast<int>(params_.size());
      params_.push_back({prefix + ".weight", BasicTensor<T>({s.out_channels, s.in_channels})});
      params_.push_back({prefix + ".bias", BasicTensor<T>({s.out_channels})});
    }
  }
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class T>
void Network<T>::init_he_uniform(Rng& rng) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (first_param_[i] < 0) continue;
    const LayerSpec& s = layers_[i];
    const int fan_in = s.kind == LayerKind::Conv2d ? s.in_channels * s.kernel * s.kernel : s.in_channels;
    const double bound = std::sqrt(6.0 / fan_in);
    auto& w = params_[first_param_[i]].value;
    for (auto& x : w.values()) x = static_cast<T>(rng.uniform(-bound, bound));
    params_[first_param_[i] + 1].value.fill(T{0});
  }
}

template <class T>
void Network<T>::zero_params() {
  for (auto& p : params_) p.value.fill(T{0});
}

template <class T>
ParamList<T> Network<T>::zero_grads() const {
  ParamList<T> g = params_;
  for (auto& p : g) p.value.fill(T{0});
  return g;
}

template <class T>
void Network<T>::assign(const ParamList<T>& values) {
  if (values.size() != params_.size()) {
    throw ConfigError("parameter count mismatch: expected " + std::to_string(params_.size()) + ", got " +
                      std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].name != params_[i].name || values[i].value.shape() != params_[i].value.shape()) {
      throw ConfigError("parameter " + std::to_string(i) + " mismatch: expected " + params_[i].name +
                        shape_string(params_[i].value.shape()) + ", got " + values[i].name +
                        shape_string(values[i].value.shape()));
    }
  }
  params_ = values;
}

template <class T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& input) const {
  return run(input, nullptr);
}

template <class T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& input, Tape<T>& tape) const {
  return run(input, &tape);
}

template <class T>
BasicTensor<T> Network<T>::run(const BasicTensor<T>& input, Tape<T>* tape) const {
  if (tape) {
    tape->activations.clear();
    tape->argmax.assign(layers_.size(), {});
    tape->activations.push_back(input);
  }
  BasicTensor<T> x = input;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const LayerSpec& s = layers_[li];
    const Shape& in = x.shape();
    auto fail = [&](const std::string& what) {
      throw ConfigError(layer_label(li, s) + ": " + what + ", input shape " + shape_string(in));
    };
    if (in.empty()) fail("empty input");
    const int n = in[0];
    BasicTensor<T> y;
    switch (s.kind) {
      case LayerKind::Conv2d: {
        if (!is_spatial(in)) fail("expected NCHW input");
        if (in[1] != s.in_channels) fail("expected " + std::to_string(s.in_channels) + " channels");
        const int h = in[2], w = in[3];
        const int ho = conv_out(h, s), wo = conv_out(w, s);
        if (ho < 1 || wo < 1) fail("spatial extent too small");
        const int kk = s.in_channels * s.kernel * s.kernel;
        const int hw = ho * wo;
        y = BasicTensor<T>({n, s.out_channels, ho, wo});
        const auto& wt = params_[first_param_[li]].value;
        const auto& bias = params_[first_param_[li] + 1].value;
        ConstMatMap<T> wmat(wt.data(), s.out_channels, kk);
        ConstVecMap<T> bvec(bias.data(), s.out_channels);
        RowMat<T> col(kk, hw);
        const std::size_t in_per = static_cast<std::size_t>(in[1]) * h * w;
        const std::size_t out_per = static_cast<std::size_t>(s.out_channels) * hw;
        for (int b = 0; b < n; ++b) {
          im2col(x.data() + b * in_per, in[1], h, w, s, ho, wo, col.data());
          MatMap<T> out(y.data() + b * out_per, s.out_channels, hw);
          out.noalias() = wmat * col;
          out.colwise() += bvec;
        }
        break;
      }
      case LayerKind::MaxPool2d: {
        if (!is_spatial(in)) fail("expected NCHW input");
        const int k = s.kernel;
        const int ho = in[2] / k, wo = in[3] / k;
        if (ho < 1 || wo < 1) fail("spatial extent smaller than pool size");
        y = BasicTensor<T>({n, in[1], ho, wo});
        std::vector<int>* arg = nullptr;
        if (tape) {
          arg = &tape->argmax[li];
          arg->resize(y.size());
        }
        std::size_t o = 0;
        for (int b = 0; b < n; ++b) {
          for (int c = 0; c < in[1]; ++c) {
            const std::size_t base = (static_cast<std::size_t>(b) * in[1] + c) * in[2] * in[3];
            for (int oy = 0; oy < ho; ++oy) {
              for (int ox = 0; ox < wo; ++ox, ++o) {
                std::size_t best = base + static_cast<std::size_t>(oy * k) * in[3] + ox * k;
                for (int dy = 0; dy < k; ++dy) {
                  for (int dx = 0; dx < k; ++dx) {
                    const std::size_t idx = base + static_cast<std::size_t>(oy * k + dy) * in[3] + ox * k + dx;
                    if (x[idx] > x[best]) best = idx;
                  }
                }
                y[o] = x[best];
                if (arg) (*arg)[o] = static_cast<int>(best);
              }
            }
          }
        }
        break;
      }
      case LayerKind::GlobalAvgPool: {
        if (!is_spatial(in)) fail("expected NCHW input");
        const int hw = in[2] * in[3];
        y = BasicTensor<T>({n, in[1]});
        for (std::size_t bc = 0; bc < y.size(); ++bc) {
          const T* p = x.data() + bc * hw;
          T sum{0};
          for (int i = 0; i < hw; ++i) sum += p[i];
          y[bc] = sum / static_cast<T>(hw);
        }
        break;
      }
      case LayerKind::Dense: {
        const int features = static_cast<int>(x.size() / n);
        if (features != s.in_channels) fail("expected " + std::to_string(s.in_channels) + " features");
        y = BasicTensor<T>({n, s.out_channels});
        ConstMatMap<T> wmat(params_[first_param_[li]].value.data(), s.out_channels, s.in_channels);
        ConstVecMap<T> bvec(params_[first_param_[li] + 1].value.data(), s.out_channels);
        for (int b = 0; b < n; ++b) {
          ConstVecMap<T> xv(x.data() + static_cast<std::size_t>(b) * features, features);
          VecMap<T> yv(y.data() + static_cast<std::size_t>(b) * s.out_channels, s.out_channels);
          yv.noalias() = wmat * xv;
          yv += bvec;
        }
        break;
      }
      case LayerKind::Relu: {
        y = x;
        for (auto& v : y.values()) v = v > T{0} ? v : T{0};
        break;
      }
      case LayerKind::Sigmoid: {
        y = x;
        for (auto& v : y.values()) v = T{1} / (T{1} + std::exp(-v));
        break;
      }
      case LayerKind::UpsampleNearest: {
        if (!is_spatial(in)) fail("expected NCHW input");
        const int f = s.kernel;
        const int h = in[2], w = in[3];
        y = BasicTensor<T>({n, in[1], h * f, w * f});
        std::size_t o = 0;
        for (int bc = 0; bc < n * in[1]; ++bc) {
          const T* plane = x.data() + static_cast<std::size_t>(bc) * h * w;
          for (int oy = 0; oy < h * f; ++oy) {
            const T* row = plane + static_cast<std::size_t>(oy / f) * w;
            for (int ox = 0; ox < w * f; ++ox) y[o++] = row[ox / f];
          }
        }
        break;
      }
    }
    if (tape) tape->activations.push_back(y);
    x = std::move(y);
  }
  return x;
}

template <class T>
void Network<T>::backward(const Tape<T>& tape, BasicTensor<T> grad, ParamList<T>& grads,
                          std::size_t end_layer) const {
  if (tape.activations.size() != layers_.size() + 1) throw ConfigError("backward: tape does not match network");
  if (grad.shape() != tape.activations[end_layer].shape()) {
    throw ConfigError("backward: gradient shape " + shape_string(grad.shape()) + " does not match activation " +
                      shape_string(tape.activations[end_layer].shape()));
  }
  for (std::size_t li = end_layer; li-- > 0;) {
    const LayerSpec& s = layers_[li];
    const BasicTensor<T>& x = tape.activations[li];
    const BasicTensor<T>& y = tape.activations[li + 1];
    const Shape& in = x.shape();
    const int n = in[0];
    const bool need_input_grad = li > 0;
    BasicTensor<T> gin;
    switch (s.kind) {
      case LayerKind::Conv2d: {
        const int h = in[2], w = in[3];
        const int ho = y.dim(2), wo = y.dim(3);
        const int kk = s.in_channels * s.kernel * s.kernel;
        const int hw = ho * wo;
        auto& gw = grads[first_param_[li]].value;
        auto& gb = grads[first_param_[li] + 1].value;
        MatMap<T> gwmat(gw.data(), s.out_channels, kk);
        VecMap<T> gbvec(gb.data(), s.out_channels);
        ConstMatMap<T> wmat(params_[first_param_[li]].value.data(), s.out_channels, kk);
        RowMat<T> col(kk, hw);
        RowMat<T> dcol(kk, hw);
        RowMat<T> gw_sample(s.out_channels, kk);
        if (need_input_grad) gin = BasicTensor<T>(in);
        const std::size_t in_per = static_cast<std::size_t>(in[1]) * h * w;
        const std::size_t out_per = static_cast<std::size_t>(s.out_channels) * hw;
        for (int b = 0; b < n; ++b) {
          ConstMatMap<T> g(grad.data() + b * out_per, s.out_channels, hw);
          im2col(x.data() + b * in_per, in[1], h, w, s, ho, wo, col.data());
          // Per-sample products are formed before accumulation so a sample's
          // contribution does not depend on its position in the batch.
          gw_sample.noalias() = g * col.transpose();
          gwmat += gw_sample;
          // Plain loop: Eigen's vectorised reduction groups terms by the
          // pointer's alignment, which differs between batch slots.
          for (int c = 0; c < s.out_channels; ++c) {
            const T* row = grad.data() + b * out_per + static_cast<std::size_t>(c) * hw;
            T acc = 0;
            for (int i = 0; i < hw; ++i) acc += row[i];
            gb[c] += acc;
          }
          if (need_input_grad) {
            dcol.noalias() = wmat.transpose() * g;
            col2im_add(dcol.data(), in[1], h, w, s, ho, wo, gin.data() + b * in_per);
          }
        }
        break;
      }
      case LayerKind::MaxPool2d: {
        if (!need_input_grad) break;
        gin = BasicTensor<T>(in);
        const auto& arg = tape.argmax[li];
        for (std::size_t o = 0; o < grad.size(); ++o) gin[arg[o]] += grad[o];
        break;
      }
      case LayerKind::GlobalAvgPool: {
        if (!need_input_grad) break;
        gin = BasicTensor<T>(in);
        const int hw = in[2] * in[3];
        for (std::size_t bc = 0; bc < grad.size(); ++bc) {
          const T g = grad[bc] / static_cast<T>(hw);
          T* p = gin.data() + bc * hw;
          for (int i = 0; i < hw; ++i) p[i] = g;
        }
        break;
      }
      case LayerKind::Dense: {
        const int features = static_cast<int>(x.size() / n);
        MatMap<T> gwmat(grads[first_param_[li]].value.data(), s.out_channels, features);
        VecMap<T> gbvec(grads[first_param_[li] + 1].value.data(), s.out_channels);
        ConstMatMap<T> wmat(params_[first_param_[li]].value.data(), s.out_channels, features);
        if (need_input_grad) gin = BasicTensor<T>(in);
        for (int b = 0; b < n; ++b) {
          ConstVecMap<T> g(grad.data() + static_cast<std::size_t>(b) * s.out_channels, s.out_channels);
          ConstVecMap<T> xv(x.data() + static_cast<std::size_t>(b) * features, features);
          gwmat.noalias() += g * xv.transpose();
          gbvec += g;
          if (need_input_grad) {
            VecMap<T> gi(gin.data() + static_cast<std::size_t>(b) * features, features);
            gi.noalias() = wmat.transpose() * g;
          }
        }
        break;
      }
      case LayerKind::Relu: {
        if (!need_input_grad) break;
        gin = std::move(grad);
        for (std::size_t i = 0; i < gin.size(); ++i) {
          if (!(x[i] > T{0})) gin[i] = T{0};
        }
        break;
      }
      case LayerKind::Sigmoid: {
        if (!need_input_grad) break;
        gin = std::move(grad);
        for (std::size_t i = 0; i < gin.size(); ++i) gin[i] *= y[i] * (T{1} - y[i]);
        break;
      }
      case LayerKind::UpsampleNearest: {
        if (!need_input_grad) break;
        const int f = s.kernel;
        const int h = in[2], w = in[3];
        gin = BasicTensor<T>(in);
        std::size_t o = 0;
        for (int bc = 0; bc < n * in[1]; ++bc) {
          T* plane = gin.data() + static_cast<std::size_t>(bc) * h * w;
          for (int oy = 0; oy < h * f; ++oy) {
            T* row = plane + static_cast<std::size_t>(oy / f) * w;
            for (int ox = 0; ox < w * f; ++ox) row[ox / f] += grad[o++];
          }
        }
        break;
      }
    }
    if (first_param_[li] >= 0) {
      for (int p = first_param_[li]; p < first_param_[li] + 2; ++p) {
        for (const T v : grads[p].value.values()) {
          if (!std::isfinite(v)) throw NumericError("non-finite gradient in " + layer_label(li, s));
        }
      }
    }
    if (!need_input_grad) break;
    grad = std::move(gin);
  }
}

template <class T>
double bce_sum(const BasicTensor<T>& outputs, const BasicTensor<T>& targets, std::span<const T> sample_weights) {
  if (outputs.shape() != targets.shape()) {
    throw ConfigError("bce: output shape " + shape_string(outputs.shape()) + " vs target shape " +
                      shape_string(targets.shape()));
  }
  const int n = outputs.dim(0);
  if (!sample_weights.empty() && sample_weights.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("bce: sample weight count does not match batch");
  }
  const std::size_t per = outputs.size() / n;
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    double sample = 0.0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) sample += bce_loss(outputs[i], targets[i]);
    total += sample_weights.empty() ? sample : static_cast<double>(sample_weights[b]) * sample;
  }
  return total;
}

template <class T>
double bce_backward(const Network<T>& net, const Tape<T>& tape, const BasicTensor<T>& targets,
                    std::span<const T> sample_weights, ParamList<T>& grads) {
  const auto& layers = net.layers();
  const BasicTensor<T>& out = tape.activations.back();
  const double loss = bce_sum(out, targets, sample_weights);
  const int n = out.dim(0);
  const std::size_t per = out.size() / n;
  BasicTensor<T> g(out.shape());
  const bool fused = !layers.empty() && layers.back().kind == LayerKind::Sigmoid;
  for (int b = 0; b < n; ++b) {
    const T wgt = sample_weights.empty() ? T{1} : sample_weights[b];
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      g[i] = fused ? wgt * (out[i] - targets[i])
                   : wgt * static_cast<T>(bce_grad(out[i], targets[i]));
    }
  }
  const std::size_t end = fused ? layers.size() - 1 : layers.size();
  net.backward(tape, std::move(g), grads, end);
  return loss;
}

template <class T>
void check_finite(const ParamList<T>& grads) {
  for (const auto& p : grads) {
    for (const T v : p.value.values()) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter " + p.name);
    }
  }
}

template class Network<float>;
template class Network<double>;
template double bce_backward(const Network<float>&, const Tape<float>&, const BasicTensor<float>&,
                             std::span<const float>, ParamList<float>&);
template double bce_backward(const Network<double>&, const Tape<double>&, const BasicTensor<double>&,
                             std::span<const double>, ParamList<double>&);
template double bce_sum(const BasicTensor<float>&, const BasicTensor<float>&, std::span<const float>);
template double bce_sum(const BasicTensor<double>&, const BasicTensor<double>&, std::span<const double>);
template void check_finite(const ParamList<float>&);
template void check_finite(const ParamList<double>&);

}  // namespace camel::nn
