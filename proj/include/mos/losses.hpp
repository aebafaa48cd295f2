#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mos/encoder.hpp"
#include "mos/stitching.hpp"
#include "mos/tensor.hpp"

namespace mos {

/// Scalar loss values for one step. l_total is the exact sum of the three
/// components (disabled components contribute zero).
template <typename T>
struct LossReport {
  T l_m2s = T(0);
  T l_m2m = T(0);
  T l_s2s = T(0);
  T l_total = T(0);
  T tau = T(0);
};

struct LossFlags {
  bool use_m2s = true;
  bool use_m2m = true;
  bool use_s2s = true;
};

/// Cosine similarity with an epsilon-guarded denominator, in [-1, 1].
template <typename T>
T cosine_similarity(const T *h, const T *z, std::size_t dim) {
  T dot = T(0), nh = T(0), nz = T(0);
  for (std::size_t i = 0; i < dim; ++i) {
    dot += h[i] * z[i];
    nh += h[i] * h[i];
    nz += z[i] * z[i];
  }
  return dot / (std::sqrt(nh) * std::sqrt(nz) + T(1e-12));
}

template <typename T>
T cosine_similarity(const Tensor<T> &h, const Tensor<T> &z) {
  check_same_shape(h, z, "cosine_similarity");
  return cosine_similarity(h.ptr(), z.ptr(), h.size());
}

namespace detail {

/**
 * Shared core of the three objectives: weighted softmax cross-entropy over
 * the cosine-similarity rows sim(P_i, Z_*) / tau. Positions and weights are
 * given per row; `norm` is the overall 1/norm factor. If d_p is non-null the
 * gradient w.r.t. P (treating Z as constant, i.e. stop-gradient semantics)
 * is accumulated into it.
 */
template <typename T>
T weighted_info_nce(const Tensor<T> &P, const Tensor<T> &Z, const std::vector<std::vector<int>> &labels,
                    const std::vector<std::vector<double>> *weights, T tau, std::size_t norm, Tensor<T> *d_p) {
  if (tau <= T(0)) throw ConfigError("loss: tau must be positive");
  if (P.shape.size() != 2 || Z.shape.size() != 2) throw ShapeError("loss: embeddings must be rank-2");
  if (P.shape != Z.shape) throw ShapeError("loss: P and Z must have identical shape");
  const std::size_t n = P.shape[0];
  const std::size_t dim = P.shape[1];
  if (labels.size() != n) throw ShapeError("loss: label rows must match batch size");
  if (weights && weights->size() != n) throw ShapeError("loss: weight rows must match batch size");
  if (d_p) check_same_shape(*d_p, P, "loss gradient");

  constexpr T kEps = T(1e-12);
  std::vector<T> z_norm(n);
  for (std::size_t k = 0; k < n; ++k) {
    T acc = T(0);
    for (std::size_t e = 0; e < dim; ++e) acc += Z[k * dim + e] * Z[k * dim + e];
    z_norm[k] = std::sqrt(acc);
  }

  T loss = T(0);
  std::vector<T> sim(n), logits(n), probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T *p_row = P.ptr() + i * dim;
    T p_acc = T(0);
    for (std::size_t e = 0; e < dim; ++e) p_acc += p_row[e] * p_row[e];
    const T p_norm = std::sqrt(p_acc);

    T max_logit = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      T dot = T(0);
      const T *z_row = Z.ptr() + k * dim;
      for (std::size_t e = 0; e < dim; ++e) dot += p_row[e] * z_row[e];
      sim[k] = dot / (p_norm * z_norm[k] + kEps);
      logits[k] = sim[k] / tau;
      max_logit = logits[k] > max_logit ? logits[k] : max_logit;
    }
    T sum_exp = T(0);
    for (std::size_t k = 0; k < n; ++k) {
      probs[k] = std::exp(logits[k] - max_logit);
      sum_exp += probs[k];
    }
    const T lse = max_logit + std::log(sum_exp);
    const T inv_sum = T(1) / sum_exp;
    for (std::size_t k = 0; k < n; ++k) probs[k] *= inv_sum;

    const auto &row_labels = labels[i];
    T row_weight = T(0);
    for (std::size_t j = 0; j < row_labels.size(); ++j) {
      const int y = row_labels[j];
      if (y < 0 || static_cast<std::size_t>(y) >= n) throw ConfigError("loss: label index out of range");
      const T w = weights ? static_cast<T>((*weights)[i][j]) : T(1);
      loss += w * (lse - logits[y]);
      row_weight += w;
    }

    if (d_p) {
      // d(loss)/d(logit_k) = (row_weight * softmax_k - sum of w at k) / norm.
      const T inv_norm = T(1) / static_cast<T>(norm);
      std::vector<T> d_sim(n);
      for (std::size_t k = 0; k < n; ++k) d_sim[k] = row_weight * probs[k] * inv_norm / tau;
      for (std::size_t j = 0; j < row_labels.size(); ++j) {
        const T w = weights ? static_cast<T>((*weights)[i][j]) : T(1);
        d_sim[row_labels[j]] -= w * inv_norm / tau;
      }
      // Through cosine similarity, Z held constant.
      T *dp_row = d_p->ptr() + i * dim;
      T radial = T(0);
      for (std::size_t k = 0; k < n; ++k) {
        const T denom = p_norm * z_norm[k] + kEps;
        const T scale = d_sim[k] / denom;
        const T *z_row = Z.ptr() + k * dim;
        for (std::size_t e = 0; e < dim; ++e) dp_row[e] += scale * z_row[e];
        radial += d_sim[k] * sim[k] * z_norm[k] / denom;
      }
      if (p_norm > T(0)) {
        const T factor = radial / p_norm;
        for (std::size_t e = 0; e < dim; ++e) dp_row[e] -= factor * p_row[e];
      }
    }
  }
  return loss / static_cast<T>(norm);
}

} // namespace detail

/// Multiple-to-single objective: stitched-view predictions P against
/// single-view targets Z under the m2s label matrix [N x M].
template <typename T>
T loss_m2s(const Tensor<T> &P, const Tensor<T> &Z, const std::vector<std::vector<int>> &labels, T tau,
           Tensor<T> *d_p = nullptr) {
  if (labels.empty() || labels[0].empty()) throw ShapeError("loss_m2s: empty labels");
  const std::size_t tiles = labels[0].size();
  for (const auto &row : labels)
    if (row.size() != tiles) throw ShapeError("loss_m2s: ragged label rows");
  return detail::weighted_info_nce(P, Z, labels, nullptr, tau, P.shape[0] * tiles, d_p);
}

/// Multiple-to-multiple objective: stitched-view predictions against the
/// other stitched view, weighted by the overlap scores [N x (2M-1)].
template <typename T>
T loss_m2m(const Tensor<T> &P, const Tensor<T> &Z, const std::vector<std::vector<int>> &labels,
           const std::vector<std::vector<double>> &weights, T tau, Tensor<T> *d_p = nullptr) {
  if (labels.empty() || labels[0].empty()) throw ShapeError("loss_m2m: empty labels");
  const std::size_t width = labels[0].size();
  if (width % 2 != 1) throw ShapeError("loss_m2m: label rows must have odd length 2M-1");
  const std::size_t tiles = (width + 1) / 2;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i].size() != width || weights[i].size() != width) throw ShapeError("loss_m2m: ragged rows");
  return detail::weighted_info_nce(P, Z, labels, &weights, tau, P.shape[0] * tiles, d_p);
}

/// Single-to-single objective: plain instance discrimination between the two
/// natural views.
template <typename T>
T loss_s2s(const Tensor<T> &P, const Tensor<T> &Z, T tau, Tensor<T> *d_p = nullptr) {
  const std::size_t n = P.shape.empty() ? 0 : P.shape[0];
  if (n == 0) throw ShapeError("loss_s2s: empty batch");
  std::vector<std::vector<int>> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = {static_cast<int>(i)};
  return detail::weighted_info_nce(P, Z, labels, nullptr, tau, n, d_p);
}

/**
 * The combined objective. Gradients flow only through p_mul1 and p3 (the
 * momentum-branch z inputs are constants). Disabled components contribute
 * zero to the report and to the gradients. Throws NumericError if any
 * component is non-finite.
 */
template <typename T>
LossReport<T> total_loss(const EmbeddingBundle<T> &bundle, const std::vector<std::vector<int>> &y_m2s,
                         const CorrespondenceTargets &m2m, T tau, const LossFlags &flags = {},
                         Tensor<T> *d_p_mul1 = nullptr, Tensor<T> *d_p3 = nullptr) {
  LossReport<T> report;
  report.tau = tau;
  if (flags.use_m2s) report.l_m2s = loss_m2s(bundle.p_mul1, bundle.z3, y_m2s, tau, d_p_mul1);
  if (flags.use_m2m) report.l_m2m = loss_m2m(bundle.p_mul1, bundle.z_mul2, m2m.labels, m2m.scores, tau, d_p_mul1);
  if (flags.use_s2s) report.l_s2s = loss_s2s(bundle.p3, bundle.z4, tau, d_p3);
  report.l_total = report.l_m2s + report.l_m2m + report.l_s2s;
  if (!std::isfinite(report.l_total))
    throw NumericError("loss: non-finite total (m2s=" + std::to_string(static_cast<double>(report.l_m2s)) +
                       ", m2m=" + std::to_string(static_cast<double>(report.l_m2m)) +
                       ", s2s=" + std::to_string(static_cast<double>(report.l_s2s)) + ")");
  return report;
}

} // namespace mos
