#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "mos/errors.hpp"

namespace mos {

/**
 * Dense row-major tensor. Just shape + contiguous storage; all math lives in
 * free functions that take raw pointers plus dimensions.
 */
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) { data.assign(count(shape), T(0)); }
  Tensor(std::initializer_list<std::size_t> s) : Tensor(std::vector<std::size_t>(s)) {}

  static std::size_t count(const std::vector<std::size_t> &s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  T *ptr() { return data.data(); }
  const T *ptr() const { return data.data(); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(T(0)); }

  bool same_shape(const Tensor &other) const { return shape == other.shape; }

  T &operator[](std::size_t i) { return data[i]; }
  const T &operator[](std::size_t i) const { return data[i]; }

  /// Elementwise cast to another scalar type.
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

/// Reference to one named parameter tensor inside a model, with its
/// weight-decay eligibility (true only for the 2-D weight matrices).
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T> *tensor = nullptr;
  bool decay = false;
};

template <typename T>
inline void check_same_shape(const Tensor<T> &a, const Tensor<T> &b, const char *what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": tensor shapes differ");
}

} // namespace mos
