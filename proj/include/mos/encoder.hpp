#pragma once

#include <vector>

#include "mos/heads.hpp"
#include "mos/vit.hpp"

namespace mos {

/**
 * Base/momentum encoder pair with the contrastive heads. The projector is a
 * single module used by both branches (its target-side outputs are
 * gradient-stopped); the predictor exists only on the base branch. The
 * momentum parameters mirror the base encoder and are advanced by EMA only.
 */
template <typename T>
struct EncoderState {
  ViTConfig vit_cfg;
  HeadConfig projector_cfg, predictor_cfg;

  ViTParams<T> theta; // base encoder
  ViTParams<T> xi;    // momentum encoder
  HeadParams<T> projector;
  HeadParams<T> predictor;

  static EncoderState init(const ViTConfig &vit_cfg, const HeadConfig &proj_cfg, const HeadConfig &pred_cfg,
                           Rng rng) {
    EncoderState s;
    s.vit_cfg = vit_cfg;
    s.projector_cfg = proj_cfg;
    s.predictor_cfg = pred_cfg;
    s.theta = ViTParams<T>::init(vit_cfg, rng.child(1));
    s.xi = s.theta; // momentum branch starts as a copy
    s.projector = HeadParams<T>::init(proj_cfg, rng.child(2));
    s.predictor = HeadParams<T>::init(pred_cfg, rng.child(3));
    return s;
  }

  /// Parameters updated by the optimizer, in a stable order.
  std::vector<ParamRef<T>> trainable() {
    std::vector<ParamRef<T>> refs;
    theta.collect("base", refs);
    projector.collect("projector", refs);
    predictor.collect("predictor", refs);
    return refs;
  }

  /// Momentum parameters (EMA targets), aligned with theta's collect order.
  std::vector<ParamRef<T>> momentum() {
    std::vector<ParamRef<T>> refs;
    xi.collect("momentum", refs);
    return refs;
  }

  /// Everything persisted in a checkpoint.
  std::vector<ParamRef<T>> all() {
    std::vector<ParamRef<T>> refs = trainable();
    xi.collect("momentum", refs);
    return refs;
  }
};

/// Gradient buffers matching the trainable parameters.
template <typename T>
struct EncoderGrads {
  ViTParams<T> theta;
  HeadParams<T> projector;
  HeadParams<T> predictor;

  static EncoderGrads zeros(const EncoderState<T> &state) {
    EncoderGrads g;
    g.theta = ViTParams<T>::zeros(state.vit_cfg);
    g.projector = HeadParams<T>::zeros(state.projector_cfg);
    g.predictor = HeadParams<T>::zeros(state.predictor_cfg);
    return g;
  }

  void zero() {
    std::vector<ParamRef<T>> refs;
    theta.collect("base", refs);
    projector.collect("projector", refs);
    predictor.collect("predictor", refs);
    for (auto &r : refs) r.tensor->zero();
  }

  /// Aligned with EncoderState::trainable().
  std::vector<ParamRef<T>> refs() {
    std::vector<ParamRef<T>> out;
    theta.collect("base", out);
    projector.collect("projector", out);
    predictor.collect("predictor", out);
    return out;
  }
};

/// The five contrastive representations for one step, all [N, d]. The
/// momentum-branch outputs (z_*) carry no gradient dependence on any
/// parameter: they are produced outside the differentiated path.
template <typename T>
struct EmbeddingBundle {
  Tensor<T> p_mul1, p3; // base branch, through the predictor
  Tensor<T> z_mul2, z3, z4; // momentum branch, through the projector
};

/// Activation caches for the two differentiated forward paths.
template <typename T>
struct ForwardAllCache {
  ViTCache<T> vit_mul1, vit_x3;
  HeadCache<T> proj_mul1, proj_x3;
  HeadCache<T> pred_mul1, pred_x3;
};

/**
 * Run the four-view forward pass: stitched view 1 and single view 3 through
 * the base path (encode -> project -> predict), stitched view 2 and single
 * views 3, 4 through the momentum path (encode -> project). Pass a cache to
 * enable backward_all.
 */
template <typename T>
EmbeddingBundle<T> forward_all(EncoderState<T> &state, const std::vector<Image> &stitched1,
                               const std::vector<Image> &stitched2, const std::vector<Image> &x3,
                               const std::vector<Image> &x4, ForwardAllCache<T> *cache = nullptr,
                               Rng *drop_rng = nullptr) {
  const std::size_t n = stitched1.size();
  if (stitched2.size() != n || x3.size() != n || x4.size() != n)
    throw ShapeError("forward_all: all four views must share the batch size");

  EmbeddingBundle<T> bundle;

  // Base path (differentiated).
  {
    Tensor<T> emb = vit_forward<T>(state.theta, state.vit_cfg, stitched1, cache ? &cache->vit_mul1 : nullptr, drop_rng);
    Tensor<T> proj = head_forward<T>(state.projector, emb, cache ? &cache->proj_mul1 : nullptr);
    bundle.p_mul1 = head_forward<T>(state.predictor, proj, cache ? &cache->pred_mul1 : nullptr);
  }
  {
    Tensor<T> emb = vit_forward<T>(state.theta, state.vit_cfg, x3, cache ? &cache->vit_x3 : nullptr, drop_rng);
    Tensor<T> proj = head_forward<T>(state.projector, emb, cache ? &cache->proj_x3 : nullptr);
    bundle.p3 = head_forward<T>(state.predictor, proj, cache ? &cache->pred_x3 : nullptr);
  }

  // Momentum path (targets; never cached, never differentiated).
  bundle.z_mul2 = head_forward<T>(state.projector, vit_forward<T>(state.xi, state.vit_cfg, stitched2));
  bundle.z3 = head_forward<T>(state.projector, vit_forward<T>(state.xi, state.vit_cfg, x3));
  bundle.z4 = head_forward<T>(state.projector, vit_forward<T>(state.xi, state.vit_cfg, x4));
  return bundle;
}

/// Backpropagate embedding gradients (d_p_mul1, d_p3) through the base path,
/// accumulating into `grads`. Momentum parameters receive nothing.
template <typename T>
void backward_all(EncoderState<T> &state, const ForwardAllCache<T> &cache, const Tensor<T> &d_p_mul1,
                  const Tensor<T> &d_p3, EncoderGrads<T> &grads) {
  {
    Tensor<T> d_proj = head_backward<T>(state.predictor, cache.pred_mul1, d_p_mul1, grads.predictor);
    Tensor<T> d_emb = head_backward<T>(state.projector, cache.proj_mul1, d_proj, grads.projector);
    vit_backward<T>(state.theta, state.vit_cfg, cache.vit_mul1, d_emb, grads.theta);
  }
  {
    Tensor<T> d_proj = head_backward<T>(state.predictor, cache.pred_x3, d_p3, grads.predictor);
    Tensor<T> d_emb = head_backward<T>(state.projector, cache.proj_x3, d_proj, grads.projector);
    vit_backward<T>(state.theta, state.vit_cfg, cache.vit_x3, d_emb, grads.theta);
  }
}

/**
 * EMA update of the momentum parameters: xi <- mu * xi + (1 - mu) * theta,
 * elementwise. theta is untouched. mu must lie in [0, 1].
 */
template <typename T>
void ema_update(std::vector<ParamRef<T>> xi, const std::vector<ParamRef<T>> &theta, double mu) {
  if (mu < 0.0 || mu > 1.0) throw ConfigError("ema: mu must lie in [0,1]");
  if (xi.size() != theta.size()) throw ShapeError("ema: parameter lists differ in length");
  const T m = static_cast<T>(mu);
  const T one_minus = static_cast<T>(1.0 - mu);
  for (std::size_t i = 0; i < xi.size(); ++i) {
    Tensor<T> &x = *xi[i].tensor;
    const Tensor<T> &t = *theta[i].tensor;
    check_same_shape(x, t, "ema");
    for (std::size_t e = 0; e < x.size(); ++e) x[e] = m * x[e] + one_minus * t[e];
  }
}

} // namespace mos
