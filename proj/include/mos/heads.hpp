#pragma once

#include <string>
#include <vector>

#include "mos/nn_ops.hpp"
#include "mos/rng.hpp"
#include "mos/tensor.hpp"

namespace mos {

enum class NormKind { Layer, Batch };

/**
 * MLP head: `layer_count` affine layers; every hidden layer is followed by
 * normalization and a rectifier, the output layer is bare. layer_count = 3
 * for the projector, 2 for the predictor. identity = true bypasses the
 * network entirely (diagnostic configuration; requires in_dim == out_dim).
 */
struct HeadConfig {
  int in_dim = 64;
  int hidden = 128;
  int out_dim = 32;
  int layer_count = 3;
  NormKind norm = NormKind::Layer;
  bool identity = false;

  void validate() const {
    if (identity) {
      if (in_dim != out_dim) throw ConfigError("head: identity mode requires in_dim == out_dim");
      return;
    }
    if (in_dim < 1 || hidden < 1 || out_dim < 1) throw ConfigError("head: dimensions must be positive");
    if (layer_count < 1) throw ConfigError("head: layer_count must be >= 1");
  }
};

template <typename T>
struct HeadLayerParams {
  Tensor<T> w, b;
  Tensor<T> norm_g, norm_b; // empty on the output layer
  bool normed = false;
};

template <typename T>
struct HeadParams {
  HeadConfig cfg;
  std::vector<HeadLayerParams<T>> layers;

  static HeadParams init(const HeadConfig &cfg, Rng rng) {
    HeadParams p = zeros(cfg);
    for (auto &layer : p.layers) {
      for (auto &v : layer.w.data) v = static_cast<T>(rng.truncated_normal(0.02));
      if (layer.normed) layer.norm_g.fill(T(1));
    }
    return p;
  }

  static HeadParams zeros(const HeadConfig &cfg) {
    cfg.validate();
    HeadParams p;
    p.cfg = cfg;
    if (cfg.identity) return p;
    for (int l = 0; l < cfg.layer_count; ++l) {
      const auto in = static_cast<std::size_t>(l == 0 ? cfg.in_dim : cfg.hidden);
      const bool last = l == cfg.layer_count - 1;
      const auto out = static_cast<std::size_t>(last ? cfg.out_dim : cfg.hidden);
      HeadLayerParams<T> layer;
      layer.w = Tensor<T>({in, out});
      layer.b = Tensor<T>({out});
      layer.normed = !last;
      if (layer.normed) {
        layer.norm_g = Tensor<T>({out});
        layer.norm_b = Tensor<T>({out});
      }
      p.layers.push_back(std::move(layer));
    }
    return p;
  }

  void collect(const std::string &prefix, std::vector<ParamRef<T>> &out) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = prefix + ".layer" + std::to_string(l);
      out.push_back({base + ".weight", &layers[l].w, true});
      out.push_back({base + ".bias", &layers[l].b, false});
      if (layers[l].normed) {
        out.push_back({base + ".norm.g", &layers[l].norm_g, false});
        out.push_back({base + ".norm.b", &layers[l].norm_b, false});
      }
    }
  }
};

template <typename T>
struct HeadCache {
  Tensor<T> input;
  // Per hidden layer: pre-norm activations, norm statistics, normalized
  // output (pre-rectifier). The output layer caches only its input.
  std::vector<Tensor<T>> pre, mean, rstd, normed;
  std::vector<Tensor<T>> layer_in;
};

/// Forward through the head; X is [rows, in_dim].
template <typename T>
Tensor<T> head_forward(const HeadParams<T> &params, const Tensor<T> &X, HeadCache<T> *cache = nullptr) {
  params.cfg.validate();
  if (X.shape.size() != 2 || X.shape[1] != static_cast<std::size_t>(params.cfg.in_dim))
    throw ShapeError("head: input dimension mismatch");
  if (params.cfg.identity) {
    if (cache) cache->input = X;
    return X;
  }
  const std::size_t rows = X.shape[0];

  if (cache) {
    cache->input = X;
    cache->pre.assign(params.layers.size(), {});
    cache->mean.assign(params.layers.size(), {});
    cache->rstd.assign(params.layers.size(), {});
    cache->normed.assign(params.layers.size(), {});
    cache->layer_in.assign(params.layers.size(), {});
  }

  Tensor<T> cur = X;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto &layer = params.layers[l];
    const std::size_t in = layer.w.shape[0];
    const std::size_t out = layer.w.shape[1];
    if (cache) cache->layer_in[l] = cur;

    Tensor<T> y({rows, out});
    nn::linear_forward(cur.ptr(), layer.w.ptr(), layer.b.ptr(), y.ptr(), rows, in, out);
    if (layer.normed) {
      Tensor<T> normed({rows, out});
      const bool per_row = params.cfg.norm == NormKind::Layer;
      Tensor<T> mean({per_row ? rows : out}), rstd({per_row ? rows : out});
      if (per_row)
        nn::layernorm_forward(y.ptr(), layer.norm_g.ptr(), layer.norm_b.ptr(), normed.ptr(), mean.ptr(), rstd.ptr(),
                              rows, out);
      else
        nn::batchnorm_forward(y.ptr(), layer.norm_g.ptr(), layer.norm_b.ptr(), normed.ptr(), mean.ptr(), rstd.ptr(),
                              rows, out);
      if (cache) {
        cache->pre[l] = y;
        cache->mean[l] = mean;
        cache->rstd[l] = rstd;
        cache->normed[l] = normed;
      }
      nn::relu_forward(normed.ptr(), normed.ptr(), rows * out);
      cur = std::move(normed);
    } else {
      cur = std::move(y);
    }
  }
  return cur;
}

/// Backward through the head; d_out is [rows, out_dim]. Parameter gradients
/// accumulate into `grads`; returns gradient w.r.t. the input.
template <typename T>
Tensor<T> head_backward(const HeadParams<T> &params, const HeadCache<T> &cache, const Tensor<T> &d_out,
                        HeadParams<T> &grads) {
  if (params.cfg.identity) return d_out;
  const std::size_t rows = cache.input.shape[0];

  Tensor<T> cur = d_out;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto &layer = params.layers[li];
    auto &glayer = grads.layers[li];
    const std::size_t in = layer.w.shape[0];
    const std::size_t out = layer.w.shape[1];

    if (layer.normed) {
      // Rectifier gate on the normalized pre-activation, then norm backward.
      Tensor<T> d_norm({rows, out});
      nn::relu_backward(cache.normed[li].ptr(), cur.ptr(), d_norm.ptr(), rows * out);
      Tensor<T> d_pre({rows, out});
      if (params.cfg.norm == NormKind::Layer)
        nn::layernorm_backward(cache.pre[li].ptr(), layer.norm_g.ptr(), cache.mean[li].ptr(), cache.rstd[li].ptr(),
                               d_norm.ptr(), d_pre.ptr(), glayer.norm_g.ptr(), glayer.norm_b.ptr(), rows, out);
      else
        nn::batchnorm_backward(cache.pre[li].ptr(), layer.norm_g.ptr(), cache.mean[li].ptr(), cache.rstd[li].ptr(),
                               d_norm.ptr(), d_pre.ptr(), glayer.norm_g.ptr(), glayer.norm_b.ptr(), rows, out);
      cur = std::move(d_pre);
    }

    Tensor<T> d_in({rows, in});
    nn::linear_backward(cache.layer_in[li].ptr(), layer.w.ptr(), cur.ptr(), d_in.ptr(), glayer.w.ptr(),
                        glayer.b.ptr(), rows, in, out);
    cur = std::move(d_in);
  }
  return cur;
}

} // namespace mos
