#pragma once

#include <cmath>
#include <vector>

#include "mos/tensor.hpp"

namespace mos {

/**
 * AdamW with decoupled weight decay. Decay touches only parameters flagged
 * decay=true (the 2-D weight matrices); biases, norm parameters, the CLS
 * token and positional embeddings are exempt.
 */
template <typename T>
class AdamW {
public:
  AdamW(const std::vector<ParamRef<T>> &params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto &p : params) {
      m_.emplace_back(p.tensor->shape);
      v_.emplace_back(p.tensor->shape);
    }
  }

  /// One update. `grads` must align with the params list used at
  /// construction. lr = 0 leaves parameters bit-identical.
  void step(const std::vector<ParamRef<T>> &params, const std::vector<ParamRef<T>> &grads, double lr, double wd) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw ShapeError("adamw: parameter list does not match optimizer state");
    ++step_count_;
    const T b1 = static_cast<T>(beta1_);
    const T b2 = static_cast<T>(beta2_);
    const T bc1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(step_count_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(step_count_)));
    const T lr_t = static_cast<T>(lr);
    const T eps = static_cast<T>(eps_);

    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T> &p = *params[i].tensor;
      const Tensor<T> &g = *grads[i].tensor;
      check_same_shape(p, g, "adamw");
      Tensor<T> &m = m_[i];
      Tensor<T> &v = v_[i];
      const T decay = params[i].decay ? static_cast<T>(wd) : T(0);
      for (std::size_t e = 0; e < p.size(); ++e) {
        m[e] = b1 * m[e] + (T(1) - b1) * g[e];
        v[e] = b2 * v[e] + (T(1) - b2) * g[e] * g[e];
        const T m_hat = m[e] / bc1;
        const T v_hat = v[e] / bc2;
        p[e] -= lr_t * decay * p[e];
        p[e] -= lr_t * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  }

  long long step_count() const { return step_count_; }
  void set_step_count(long long n) { step_count_ = n; }

  /// Moment buffers, exposed for checkpointing (aligned with the params).
  std::vector<Tensor<T>> &first_moments() { return m_; }
  std::vector<Tensor<T>> &second_moments() { return v_; }

private:
  double beta1_, beta2_, eps_;
  long long step_count_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

} // namespace mos
