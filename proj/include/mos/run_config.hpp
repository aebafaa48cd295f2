#pragma once

#include <string>

#include <json.hpp>

#include "mos/trainer.hpp"

namespace mos {

/// Dataset selection for a command: either a CIFAR-10 binary file or the
/// in-memory synthetic generator.
struct DataConfig {
  std::string type = "synthetic"; // "synthetic" | "cifar10"
  std::string path;               // cifar10 binary (pretrain/eval train split)
  std::string test_path;          // cifar10 binary (eval test split)
  int n = 2000;                   // synthetic sample counts
  int test_n = 500;
  int classes = 3;
  int size = 32;
  std::uint64_t gen_seed = 7;
  std::uint64_t test_seed = 8;
};

struct EvalConfig {
  int knn_k = 20;
  double knn_tau = 0.07;
  int probe_epochs = 50;
  double probe_lr = 0.1;
};

/**
 * Whole-run configuration mirroring the JSON config file. Unknown keys are
 * rejected; command-line flags override file values; the effective config is
 * echoed into the output directory.
 */
struct RunConfig {
  std::string out_dir = "runs/out";
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  static RunConfig from_json(const nlohmann::json &j);
  static RunConfig from_file(const std::string &path);
  nlohmann::json to_json() const;
  void validate() const;

  /// Materialize the configured training dataset (and test split for eval).
  Dataset load_train_dataset() const;
  Dataset load_test_dataset() const;
};

} // namespace mos
