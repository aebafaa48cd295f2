#include "mos/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mos/checkpoint.hpp"
#include "mos/parallel.hpp"

namespace mos {

FeatureMatrix extract_features(const Dataset &ds, const ViTParams<float> &params, const ViTConfig &cfg,
                               const ChannelStats &stats, int batch_size) {
  if (ds.empty()) throw ConfigError("extract_features: empty dataset");
  if (ds.images[0].height != cfg.image_size || ds.images[0].width != cfg.image_size)
    throw ConfigError("extract_features: dataset image size does not match the encoder configuration");
  if (batch_size < 1) throw ConfigError("extract_features: batch_size must be >= 1");

  FeatureMatrix fm;
  fm.labels = ds.labels;
  fm.features = Tensor<float>({ds.size(), static_cast<std::size_t>(cfg.embed_dim)});

  std::vector<Image> batch;
  batch.reserve(batch_size);
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    const std::size_t end = std::min(ds.size(), begin + batch_size);
    batch.clear();
    for (std::size_t i = begin; i < end; ++i) {
      Image img = ds.images[i];
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          for (int c = 0; c < img.channels; ++c)
            img.at(y, x, c) = static_cast<float>((img.at(y, x, c) - stats.mean[c]) / stats.stddev[c]);
      batch.push_back(std::move(img));
    }
    Tensor<float> emb = encode<float>(batch, params, cfg);
    std::copy(emb.data.begin(), emb.data.end(), fm.features.data.begin() + begin * cfg.embed_dim);
  }
  return fm;
}

namespace {

// Unit-normalized copy of the rows (cosine metric becomes a dot product).
Tensor<float> normalized_rows(const Tensor<float> &m) {
  const std::size_t rows = m.shape[0];
  const std::size_t dim = m.shape[1];
  Tensor<float> out = m;
  for (std::size_t i = 0; i < rows; ++i) {
    float *row = out.ptr() + i * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) acc += static_cast<double>(row[d]) * row[d];
    const auto inv = static_cast<float>(1.0 / (std::sqrt(acc) + 1e-12));
    for (std::size_t d = 0; d < dim; ++d) row[d] *= inv;
  }
  return out;
}

} // namespace

double knn_eval(const FeatureMatrix &train, const FeatureMatrix &test, int k, double knn_tau) {
  if (train.rows() == 0 || test.rows() == 0) throw ConfigError("knn: empty split");
  if (k < 1 || static_cast<std::size_t>(k) > train.rows())
    throw ConfigError("knn: k must lie in [1, train rows]");
  if (train.features.shape[1] != test.features.shape[1]) throw ShapeError("knn: embedding dimensions differ");
  if (knn_tau <= 0.0) throw ConfigError("knn: temperature must be positive");

  const std::size_t dim = train.features.shape[1];
  const Tensor<float> train_n = normalized_rows(train.features);
  const Tensor<float> test_n = normalized_rows(test.features);

  int classes = 0;
  for (int label : train.labels) classes = std::max(classes, label + 1);
  for (int label : test.labels) classes = std::max(classes, label + 1);

  std::vector<int> correct(test.rows(), 0);
  parallel_for(test.rows(), [&](std::size_t i) {
    const float *q = test_n.ptr() + i * dim;
    std::vector<std::pair<float, std::size_t>> sims(train.rows());
    for (std::size_t j = 0; j < train.rows(); ++j) {
      const float *t = train_n.ptr() + j * dim;
      float acc = 0.0f;
      for (std::size_t d = 0; d < dim; ++d) acc += q[d] * t[d];
      sims[j] = {acc, j};
    }
    std::partial_sort(sims.begin(), sims.begin() + k, sims.end(), [](const auto &a, const auto &b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<double> votes(classes, 0.0);
    for (int j = 0; j < k; ++j)
      votes[train.labels[sims[j].second]] += std::exp(static_cast<double>(sims[j].first) / knn_tau);
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (votes[c] > votes[best]) best = c; // strict > keeps ties on the smaller id
    correct[i] = best == test.labels[i] ? 1 : 0;
  });

  std::size_t hits = 0;
  for (int c : correct) hits += static_cast<std::size_t>(c);
  return static_cast<double>(hits) / static_cast<double>(test.rows());
}

namespace {

double probe_accuracy(const Tensor<float> &w, const std::vector<float> &b, const FeatureMatrix &split) {
  const std::size_t dim = split.features.shape[1];
  const std::size_t classes = b.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.rows(); ++i) {
    const float *x = split.features.ptr() + i * dim;
    int best = 0;
    float best_score = -std::numeric_limits<float>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      float score = b[c];
      for (std::size_t d = 0; d < dim; ++d) score += w[c * dim + d] * x[d];
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    if (best == split.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(split.rows());
}

} // namespace

double linear_probe(const FeatureMatrix &train, const FeatureMatrix &test, int epochs, double lr,
                    std::uint64_t seed) {
  if (train.rows() == 0 || test.rows() == 0) throw ConfigError("probe: empty split");
  if (epochs < 0 || lr < 0.0) throw ConfigError("probe: bad epochs or learning rate");
  const std::size_t dim = train.features.shape[1];
  int classes = 0;
  for (int label : train.labels) classes = std::max(classes, label + 1);
  for (int label : test.labels) classes = std::max(classes, label + 1);

  Rng init_rng = Rng(seed).child(rng_tag::kInit);
  Tensor<float> w({static_cast<std::size_t>(classes), dim});
  for (auto &v : w.data) v = static_cast<float>(init_rng.truncated_normal(0.02));
  std::vector<float> b(classes, 0.0f);

  double best = probe_accuracy(w, b, test);
  const std::size_t batch = std::min<std::size_t>(128, train.rows());

  std::vector<std::size_t> order(train.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> logits(classes);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng = Rng(seed).child(static_cast<std::uint64_t>(epoch)).child(rng_tag::kShuffle);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    for (std::size_t begin = 0; begin + batch <= train.rows(); begin += batch) {
      Tensor<float> gw({static_cast<std::size_t>(classes), dim});
      std::vector<float> gb(classes, 0.0f);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const std::size_t row = order[begin + bi];
        const float *x = train.features.ptr() + row * dim;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < classes; ++c) {
          double score = b[c];
          for (std::size_t d = 0; d < dim; ++d) score += static_cast<double>(w[c * dim + d]) * x[d];
          logits[c] = score;
          mx = std::max(mx, score);
        }
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) sum += std::exp(logits[c] - mx);
        for (int c = 0; c < classes; ++c) {
          const double p = std::exp(logits[c] - mx) / sum;
          const double grad = p - (c == train.labels[row] ? 1.0 : 0.0);
          gb[c] += static_cast<float>(grad);
          for (std::size_t d = 0; d < dim; ++d) gw[c * dim + d] += static_cast<float>(grad) * x[d];
        }
      }
      const auto scale = static_cast<float>(lr / static_cast<double>(batch));
      for (std::size_t e = 0; e < w.size(); ++e) w[e] -= scale * gw[e];
      for (int c = 0; c < classes; ++c) b[c] -= scale * gb[c];
    }
    best = std::max(best, probe_accuracy(w, b, test));
  }
  return best;
}

void save_features(const FeatureMatrix &fm, const std::string &path) {
  Tensor<float> labels({fm.labels.size()});
  for (std::size_t i = 0; i < fm.labels.size(); ++i) labels[i] = static_cast<float>(fm.labels[i]);
  Tensor<float> features = fm.features;
  std::vector<ParamRef<float>> refs = {{"features", &features, false}, {"labels", &labels, false}};
  save_checkpoint(path, refs, 0, nlohmann::json::object());
}

FeatureMatrix load_features(const std::string &path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  auto fit = ckpt.tensors.find("features");
  auto lit = ckpt.tensors.find("labels");
  if (fit == ckpt.tensors.end() || lit == ckpt.tensors.end())
    throw DataError("features: container missing 'features'/'labels' entries");
  FeatureMatrix fm;
  fm.features = fit->second;
  fm.labels.resize(lit->second.size());
  for (std::size_t i = 0; i < fm.labels.size(); ++i) fm.labels[i] = static_cast<int>(lit->second[i]);
  return fm;
}

} // namespace mos
