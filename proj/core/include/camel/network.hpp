#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "camel/rng.hpp"
#include "camel/tensor.hpp"

namespace camel::nn {

enum class LayerKind { Conv2d, MaxPool2d, GlobalAvgPool, Dense, Relu, Sigmoid, UpsampleNearest };

std::string to_string(LayerKind kind);

/// One layer of a sequential network. Spatial tensors are NCHW; flat ones are NF.
///
/// conv2d: in_channels -> out_channels, odd kernel, stride, zero padding kernel/2.
/// maxpool2d: non-overlapping kernel x kernel windows (floor).
/// dense: in_channels -> out_channels features; spatial inputs are flattened.
/// upsample-nearest: each pixel repeated kernel x kernel times.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;

  static LayerSpec conv2d(int in, int out, int kernel = 3, int stride = 1);
  static LayerSpec maxpool2d(int size = 2);
  static LayerSpec global_avg_pool();
  static LayerSpec dense(int in, int out);
  static LayerSpec relu();
  static LayerSpec sigmoid();
  static LayerSpec upsample_nearest(int factor = 2);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Throws ConfigError if hyperparameters are out of range.
void validate(const LayerSpec& spec);

template <class T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

template <class T>
using ParamList = std::vector<NamedTensor<T>>;

/// Activations cached by a training forward pass.
template <class T>
struct Tape {
  std::vector<BasicTensor<T>> activations;  // [0] = input, [i+1] = output of layer i
  std::vector<std::vector<int>> argmax;     // per layer; filled for maxpool only
};

/// Sequential network over a fixed layer list.
///
/// Every layer computes each sample of a batch independently, so a sample's
/// output is bit-identical regardless of which batch it was evaluated in.
template <class T>
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  ParamList<T>& params() { return params_; }
  const ParamList<T>& params() const { return params_; }
  std::size_t parameter_count() const;

  /// Uniform He-style init, bound sqrt(6 / fan_in); biases zero.
  void init_he_uniform(Rng& rng);
  void zero_params();
  ParamList<T> zero_grads() const;

  BasicTensor<T> forward(const BasicTensor<T>& input) const;
  BasicTensor<T> forward(const BasicTensor<T>& input, Tape<T>& tape) const;

  /// Backpropagates grad_out (gradient w.r.t. tape.activations[end_layer]) through
  /// layers end_layer-1 .. 0, adding parameter gradients into `grads`.
  void backward(const Tape<T>& tape, BasicTensor<T> grad_out, ParamList<T>& grads,
                std::size_t end_layer) const;

  template <class U>
  Network<U> cast() const {
    Network<U> out(layers_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.params()[i].value = params_[i].value.template cast<U>();
    }
    return out;
  }

  /// Replaces parameter values; names and shapes must match exactly.
  void assign(const ParamList<T>& values);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  BasicTensor<T> run(const BasicTensor<T>& input, Tape<T>* tape) const;

  std::vector<LayerSpec> layers_;
  std::vector<int> first_param_;  // per layer; -1 when parameterless
  ParamList<T> params_;
};

/// Sum-of-BCE loss over every output element, optionally weighted per sample.
///
/// Accumulates parameter gradients into `grads`. When the network ends in a
/// sigmoid, the gradient is taken w.r.t. the logits as (p - y), which is the
/// derivative of the unclamped loss.
template <class T>
double bce_backward(const Network<T>& net, const Tape<T>& tape, const BasicTensor<T>& targets,
                    std::span<const T> sample_weights, ParamList<T>& grads);

/// Sum-of-BCE loss of a forward pass, no gradients.
template <class T>
double bce_sum(const BasicTensor<T>& outputs, const BasicTensor<T>& targets,
               std::span<const T> sample_weights = {});

/// Throws NumericError naming the first parameter whose gradient is not finite.
template <class T>
void check_finite(const ParamList<T>& grads);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace camel::nn
