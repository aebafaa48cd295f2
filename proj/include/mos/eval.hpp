#pragma once

#include <string>
#include <vector>

#include "mos/encoder.hpp"
#include "mos/image.hpp"

namespace mos {

/// Frozen CLS features (heads excluded) with their class labels.
struct FeatureMatrix {
  Tensor<float> features; // [n, embed_dim]
  std::vector<int> labels;

  std::size_t rows() const { return labels.size(); }
};

/**
 * Deterministic feature extraction: normalization only (no stochastic
 * augmentation), base-encoder CLS readout. Dataset images must already
 * match the configured image size.
 */
FeatureMatrix extract_features(const Dataset &ds, const ViTParams<float> &params, const ViTConfig &cfg,
                               const ChannelStats &stats, int batch_size = 128);

/**
 * Weighted kNN classification: per test row the k nearest training rows by
 * cosine similarity vote with weight exp(sim / knn_tau); ties go to the
 * smaller class id. Returns accuracy in [0, 1].
 */
double knn_eval(const FeatureMatrix &train, const FeatureMatrix &test, int k, double knn_tau);

/// Single affine layer + softmax cross-entropy on frozen features,
/// minibatch SGD; returns the best test accuracy over the epochs.
/// epochs = 0 scores the randomly initialized probe.
double linear_probe(const FeatureMatrix &train, const FeatureMatrix &test, int epochs, double lr,
                    std::uint64_t seed = 1);

/// Persist / reload a feature matrix in the checkpoint container format
/// ("features" + "labels" entries).
void save_features(const FeatureMatrix &fm, const std::string &path);
FeatureMatrix load_features(const std::string &path);

} // namespace mos
