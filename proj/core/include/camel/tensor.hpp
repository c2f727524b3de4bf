#pragma once

#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "camel/error.hpp"

namespace camel {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (const int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

std::string shape_string(const Shape& shape);

/// Dense row-major tensor. A plain value type: copying copies the data.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_)) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element access for rank-2/3/4 tensors.
  T& at(int i, int j) { return data_[offset(i, j)]; }
  const T& at(int i, int j) const { return data_[offset(i, j)]; }
  T& at(int i, int j, int k) { return data_[offset(i, j, k)]; }
  const T& at(int i, int j, int k) const { return data_[offset(i, j, k)]; }
  T& at(int i, int j, int k, int l) { return data_[offset(i, j, k, l)]; }
  const T& at(int i, int j, int k, int l) const { return data_[offset(i, j, k, l)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape with equal element count.
  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  template <class U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (const int e : shape) {
      if (e <= 0) throw ConfigError("tensor extents must be positive, got " + shape_string(shape));
    }
    return shape_size(shape);
  }

  std::size_t offset(int i, int j) const {
    return static_cast<std::size_t>(i) * shape_[1] + j;
  }
  std::size_t offset(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k;
  }
  std::size_t offset(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Stack equally shaped tensors along a new leading axis.
template <class T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> items) {
  if (items.empty()) throw ConfigError("stack of zero tensors");
  Shape shape = items.front().shape();
  const std::size_t per = items.front().size();
  std::vector<T> data;
  data.reserve(per * items.size());
  for (const auto& t : items) {
    if (t.shape() != shape) throw ConfigError("stack: mismatched shapes");
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  shape.insert(shape.begin(), static_cast<int>(items.size()));
  return BasicTensor<T>(std::move(shape), std::move(data));
}

/// Slice i along the leading axis.
template <class T>
BasicTensor<T> take(const BasicTensor<T>& batch, int i) {
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t per = shape_size(shape);
  const auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(per * i);
  return BasicTensor<T>(std::move(shape), std::vector<T>(first, first + static_cast<std::ptrdiff_t>(per)));
}

}  // namespace camel
