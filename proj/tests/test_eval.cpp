#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mos/eval.hpp"
#include "mos/synthetic.hpp"

using namespace mos;

namespace {

FeatureMatrix cluster_fixture(std::size_t per_class, double separation, std::uint64_t seed) {
  FeatureMatrix fm;
  fm.features = Tensor<float>({2 * per_class, 2});
  Rng rng(seed);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 0 : 1;
    const double cx = label == 0 ? -separation : separation;
    fm.features[i * 2] = static_cast<float>(cx + 0.3 * rng.normal());
    fm.features[i * 2 + 1] = static_cast<float>(3.0 + 0.3 * rng.normal());
    fm.labels.push_back(label);
  }
  return fm;
}

} // namespace

TEST_CASE("knn: every point is its own nearest neighbor") {
  FeatureMatrix fm = cluster_fixture(20, 1.0, 1);
  CHECK(knn_eval(fm, fm, 1, 0.07) == 1.0);
}

TEST_CASE("knn: single-class training set predicts that class everywhere") {
  FeatureMatrix train = cluster_fixture(10, 1.0, 2);
  for (auto &label : train.labels) label = 0;
  FeatureMatrix test = cluster_fixture(10, 1.0, 3);
  const double acc = knn_eval(train, test, 5, 0.07);
  double zeros = 0;
  for (int label : test.labels)
    if (label == 0) zeros += 1.0;
  CHECK(acc == doctest::Approx(zeros / static_cast<double>(test.rows())));
}

TEST_CASE("knn: well-separated clusters are perfectly classified") {
  FeatureMatrix train = cluster_fixture(50, 4.0, 4);
  FeatureMatrix test = cluster_fixture(25, 4.0, 5);
  CHECK(knn_eval(train, test, 5, 0.07) == 1.0);
}

TEST_CASE("knn: invariant to positive per-row rescaling (cosine metric)") {
  FeatureMatrix train = cluster_fixture(30, 2.0, 6);
  FeatureMatrix test = cluster_fixture(15, 2.0, 7);
  const double base = knn_eval(train, test, 7, 0.07);
  Rng rng(8);
  FeatureMatrix scaled_train = train;
  for (std::size_t i = 0; i < scaled_train.rows(); ++i) {
    const auto s = static_cast<float>(rng.uniform(0.2, 5.0));
    scaled_train.features[i * 2] *= s;
    scaled_train.features[i * 2 + 1] *= s;
  }
  CHECK(knn_eval(scaled_train, test, 7, 0.07) == base);
}

TEST_CASE("knn: accuracy is invariant to test-order permutation") {
  FeatureMatrix train = cluster_fixture(30, 1.5, 9);
  FeatureMatrix test = cluster_fixture(20, 1.5, 10);
  const double base = knn_eval(train, test, 5, 0.07);

  FeatureMatrix reversed;
  reversed.features = Tensor<float>(test.features.shape);
  const std::size_t n = test.rows();
  for (std::size_t i = 0; i < n; ++i) {
    reversed.features[i * 2] = test.features[(n - 1 - i) * 2];
    reversed.features[i * 2 + 1] = test.features[(n - 1 - i) * 2 + 1];
    reversed.labels.push_back(test.labels[n - 1 - i]);
  }
  CHECK(knn_eval(train, reversed, 5, 0.07) == base);
}

TEST_CASE("knn: k larger than the training set is rejected") {
  FeatureMatrix fm = cluster_fixture(5, 1.0, 11);
  CHECK_THROWS_AS(knn_eval(fm, fm, 11, 0.07), ConfigError);
}

TEST_CASE("linear probe: separable fixture reaches perfect accuracy") {
  FeatureMatrix train = cluster_fixture(50, 4.0, 12);
  FeatureMatrix test = cluster_fixture(25, 4.0, 13);
  CHECK(linear_probe(train, test, 30, 0.5, 1) == 1.0);
}

TEST_CASE("linear probe: zero epochs scores the random probe near chance") {
  FeatureMatrix train = cluster_fixture(100, 2.0, 14);
  FeatureMatrix test = cluster_fixture(100, 2.0, 15);
  const double acc = linear_probe(train, test, 0, 0.5, 2);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("linear probe: shuffled labels stay near chance") {
  FeatureMatrix train = cluster_fixture(100, 3.0, 16);
  Rng rng(17);
  for (std::size_t i = train.labels.size(); i > 1; --i)
    std::swap(train.labels[i - 1], train.labels[rng.uniform_int(i)]);
  FeatureMatrix test = cluster_fixture(100, 3.0, 18);
  const double acc = linear_probe(train, test, 20, 0.5, 3);
  CHECK(std::abs(acc - 0.5) < 0.05 + 0.10); // chance 0.5 for two balanced classes
}

TEST_CASE("extract_features: deterministic, one row per image, finite at random init") {
  Dataset ds = generate_synthetic(12, 3, 8, 20);
  ViTConfig cfg{8, 2, 16, 2, 2, 2.0, 0.0};
  ViTParams<float> params = ViTParams<float>::init(cfg, Rng(21));
  ChannelStats stats = compute_channel_stats(ds);

  FeatureMatrix a = extract_features(ds, params, cfg, stats, 5);
  FeatureMatrix b = extract_features(ds, params, cfg, stats, 7);
  CHECK(a.features.data == b.features.data);
  CHECK(a.rows() == 12);
  for (float v : a.features.data) CHECK(std::isfinite(v));

  Dataset wrong = generate_synthetic(3, 3, 16, 22);
  CHECK_THROWS_AS(extract_features(wrong, params, cfg, stats), ConfigError);
}

TEST_CASE("feature container round-trips through the checkpoint format") {
  FeatureMatrix fm = cluster_fixture(8, 1.0, 23);
  const auto path = (std::filesystem::temp_directory_path() / "mos_features.ckpt").string();
  save_features(fm, path);
  FeatureMatrix loaded = load_features(path);
  CHECK(loaded.features.data == fm.features.data);
  CHECK(loaded.labels == fm.labels);
  std::filesystem::remove(path);
}
