#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mos/augment.hpp"
#include "mos/encoder.hpp"
#include "mos/image.hpp"
#include "mos/losses.hpp"
#include "mos/optimizer.hpp"
#include "mos/stitching.hpp"

namespace mos {

/// Backbone plus head dimensions.
struct ModelConfig {
  ViTConfig vit;
  int proj_hidden = 128;
  int proj_dim = 32;
  NormKind head_norm = NormKind::Layer;

  HeadConfig projector_cfg() const {
    return HeadConfig{vit.embed_dim, proj_hidden, proj_dim, 3, head_norm, false};
  }
  HeadConfig predictor_cfg() const {
    return HeadConfig{proj_dim, proj_hidden, proj_dim, 2, head_norm, false};
  }
  void validate() const {
    vit.validate();
    projector_cfg().validate();
    predictor_cfg().validate();
  }
};

struct TrainConfig {
  int epochs = 100;
  int warmup_epochs = 5;
  int batch_size = 64;
  double lr_base = 1e-3, lr_final = 0.0;
  double wd_base = 0.04, wd_final = 0.4;
  double mu_base = 0.99, mu_final = 1.0;
  double tau = 0.2;
  std::vector<int> r_choices = {1, 2};
  int max_scale = 2; // S
  std::uint64_t seed = 1;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  bool deterministic = true;
  LossFlags losses;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  std::string out_dir;       // empty = keep everything in memory

  void validate(const ModelConfig &model) const;
  nlohmann::json snapshot(const ModelConfig &model) const;
};

/// The four augmented views of one batch plus their contrast targets.
struct FourViews {
  StitchedBatch view1, view2;
  std::vector<Image> x3, x4;
  CorrespondenceTargets targets;
  int grid_side = 1;
};

/**
 * Augment a batch into the two stitched views and two single-object views.
 * Randomness is keyed by (epoch_rng, sample id, view slot), so the result is
 * independent of evaluation order and worker count. grid_side applies to
 * both stitched views so their targets share one tile count.
 */
FourViews assemble_views(const std::vector<const Image *> &batch, const std::vector<std::size_t> &sample_ids,
                         const std::array<AugmentationPolicy, 4> &policies, int grid_side, int max_scale,
                         int base_size, const Rng &epoch_rng);

/// Per-step record written to the metrics log.
struct StepMetrics {
  long long step = 0;
  int epoch = 0;
  double lr = 0, wd = 0, mu = 0;
  LossReport<float> report;
};

/**
 * The pretraining loop: per batch, four-view augmentation, stitching,
 * forward, total loss, AdamW update, then the EMA update, with cosine
 * schedules on lr, weight decay and momentum.
 */
class Trainer {
public:
  Trainer(Dataset dataset, ModelConfig model, TrainConfig cfg);

  /// One optimization step on the given dataset rows. Exposed for tests;
  /// pretrain() drives it. Throws NumericError naming the step on a
  /// non-finite loss.
  StepMetrics train_step(const std::vector<std::size_t> &sample_ids, int epoch, int batch_index);

  struct Result {
    std::vector<StepMetrics> history;
    std::string final_checkpoint; // empty when out_dir is unset
  };

  /// Run epochs x floor(n/N) steps from the current position (0 for a fresh
  /// trainer, the stored step after resume_from).
  Result pretrain();

  /// Restore parameters, optimizer moments and the step counter from a
  /// checkpoint produced by this trainer; pretrain() then replays the
  /// remaining steps exactly.
  void resume_from(const std::string &path);

  void save_state(const std::string &path) const;

  EncoderState<float> &encoder() { return state_; }
  const Dataset &dataset() const { return dataset_; }
  const ChannelStats &channel_stats() const { return stats_; }
  const std::array<AugmentationPolicy, 4> &policies() const { return policies_; }
  long long global_step() const { return global_step_; }
  long long steps_per_epoch() const;
  long long total_steps() const;

private:
  std::vector<std::size_t> epoch_order(int epoch) const;
  std::vector<ParamRef<float>> checkpoint_refs() const;

  Dataset dataset_;
  ModelConfig model_;
  TrainConfig cfg_;
  ChannelStats stats_;
  std::array<AugmentationPolicy, 4> policies_;
  EncoderState<float> state_;
  EncoderGrads<float> grads_;
  AdamW<float> opt_;
  long long global_step_ = 0;
};

/// Finite-difference verification of the analytic gradients on a micro
/// configuration (double precision). The momentum-branch targets are frozen
/// before differencing, matching the stop-gradient definition of the loss.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t parameters_checked = 0;
  bool momentum_isolated = false; // base outputs unaffected by momentum params
};

GradCheckReport grad_check(const ModelConfig &model, int batch_size, int grid_side, int max_scale,
                           std::uint64_t seed, double fd_step = 1e-4);

} // namespace mos
