#include "mos/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "mos/checkpoint.hpp"
#include "mos/parallel.hpp"
#include "mos/schedule.hpp"
#include "mos/synthetic.hpp"

namespace mos {

void TrainConfig::validate(const ModelConfig &model) const {
  model.validate();
  if (epochs < 0 || warmup_epochs < 0 || warmup_epochs > epochs)
    throw ConfigError("train: need 0 <= warmup_epochs <= epochs");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (tau <= 0.0) throw ConfigError("train: tau must be positive");
  if (r_choices.empty()) throw ConfigError("train: r_choices must be nonempty");
  int r_max = 0;
  for (int r : r_choices) {
    if (r < 1) throw ConfigError("train: grid factors must be >= 1");
    r_max = std::max(r_max, r);
    StitchConfig sc{r, max_scale, model.vit.image_size};
    sc.validate();
  }
  if (batch_size < 2 * r_max * r_max - 1)
    throw ConfigError("train: batch_size must be >= 2*max(r)^2 - 1 for the m2m targets");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0))
    throw ConfigError("train: bad Adam constants");
  if (!(mu_base >= 0.0 && mu_base <= 1.0 && mu_final >= 0.0 && mu_final <= 1.0))
    throw ConfigError("train: momentum coefficients must lie in [0,1]");
  if (lr_base < 0.0 || lr_final < 0.0) throw ConfigError("train: negative learning rate");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
}

nlohmann::json TrainConfig::snapshot(const ModelConfig &model) const {
  nlohmann::json j;
  j["model"] = {{"image_size", model.vit.image_size}, {"patch_size", model.vit.patch_size},
                {"embed_dim", model.vit.embed_dim},   {"depth", model.vit.depth},
                {"heads", model.vit.heads},           {"mlp_ratio", model.vit.mlp_ratio},
                {"drop_path", model.vit.drop_path},   {"proj_hidden", model.proj_hidden},
                {"proj_dim", model.proj_dim},         {"head_norm", model.head_norm == NormKind::Layer ? "layer" : "batch"}};
  j["train"] = {{"epochs", epochs},       {"warmup_epochs", warmup_epochs},
                {"batch_size", batch_size}, {"lr_base", lr_base},
                {"lr_final", lr_final},   {"wd_base", wd_base},
                {"wd_final", wd_final},   {"mu_base", mu_base},
                {"mu_final", mu_final},   {"tau", tau},
                {"r_choices", r_choices}, {"max_scale", max_scale},
                {"seed", seed},           {"beta1", beta1},
                {"beta2", beta2},         {"adam_eps", adam_eps},
                {"deterministic", deterministic},
                {"use_s2s", losses.use_s2s}, {"use_m2s", losses.use_m2s}, {"use_m2m", losses.use_m2m}};
  return j;
}

FourViews assemble_views(const std::vector<const Image *> &batch, const std::vector<std::size_t> &sample_ids,
                         const std::array<AugmentationPolicy, 4> &policies, int grid_side, int max_scale,
                         int base_size, const Rng &epoch_rng) {
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("assemble_views: empty batch");
  if (sample_ids.size() != n) throw ShapeError("assemble_views: ids must match batch size");

  StitchConfig stitch_cfg{grid_side, max_scale, base_size};
  stitch_cfg.validate();

  std::vector<ViewGrid> grids1(n), grids2(n);
  FourViews views;
  views.grid_side = grid_side;
  views.x3.resize(n);
  views.x4.resize(n);

  parallel_for(n, [&](std::size_t i) {
    const Rng sample_rng = epoch_rng.child(sample_ids[i]);
    grids1[i] = build_view_grid(*batch[i], stitch_cfg, policies[0], sample_rng.child(rng_tag::kView1), i);
    grids2[i] = build_view_grid(*batch[i], stitch_cfg, policies[1], sample_rng.child(rng_tag::kView2), i);
    views.x3[i] = apply_policy(*batch[i], policies[2], sample_rng.child(rng_tag::kView3));
    views.x4[i] = apply_policy(*batch[i], policies[3], sample_rng.child(rng_tag::kView4));
  });

  views.view1 = stitch_batch(grids1, stitch_cfg);
  views.view2 = stitch_batch(grids2, stitch_cfg);
  views.targets = m2m_targets(n, static_cast<std::size_t>(stitch_cfg.tiles_per_image()));
  return views;
}

Trainer::Trainer(Dataset dataset, ModelConfig model, TrainConfig cfg)
    : dataset_(std::move(dataset)),
      model_(model),
      cfg_(cfg),
      stats_(compute_channel_stats(dataset_)),
      policies_(default_policies(model.vit.image_size)),
      state_(EncoderState<float>::init(model.vit, model.projector_cfg(), model.predictor_cfg(),
                                       Rng(cfg.seed).child(rng_tag::kInit))),
      grads_(EncoderGrads<float>::zeros(state_)),
      opt_(state_.trainable(), cfg.beta1, cfg.beta2, cfg.adam_eps) {
  cfg_.validate(model_);
  dataset_.validate();
  if (dataset_.empty()) throw ConfigError("trainer: dataset is empty");
  if (dataset_.images[0].height != model_.vit.image_size)
    throw ConfigError("trainer: dataset image size does not match the model");
  for (auto &p : policies_) {
    for (int c = 0; c < 3; ++c) {
      p.normalize_mean[c] = stats_.mean[c];
      p.normalize_std[c] = stats_.stddev[c];
    }
  }
  if (!cfg_.out_dir.empty()) std::filesystem::create_directories(cfg_.out_dir);
}

long long Trainer::steps_per_epoch() const {
  return static_cast<long long>(dataset_.size() / static_cast<std::size_t>(cfg_.batch_size));
}

long long Trainer::total_steps() const { return steps_per_epoch() * cfg_.epochs; }

std::vector<std::size_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order(dataset_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(cfg_.seed).child(static_cast<std::uint64_t>(epoch)).child(rng_tag::kShuffle);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

StepMetrics Trainer::train_step(const std::vector<std::size_t> &sample_ids, int epoch, int batch_index) {
  const auto n = sample_ids.size();
  if (n != static_cast<std::size_t>(cfg_.batch_size)) throw ShapeError("train_step: batch of wrong size");

  const Rng root(cfg_.seed);
  const Rng epoch_rng = root.child(static_cast<std::uint64_t>(epoch));

  // One grid factor per batch, shared by both stitched views.
  Rng r_rng = epoch_rng.child(rng_tag::kGridFactor).child(static_cast<std::uint64_t>(batch_index));
  const int grid_side = cfg_.r_choices[r_rng.uniform_int(cfg_.r_choices.size())];

  std::vector<const Image *> batch(n);
  for (std::size_t i = 0; i < n; ++i) batch[i] = &dataset_.images[sample_ids[i]];

  FourViews views =
      assemble_views(batch, sample_ids, policies_, grid_side, cfg_.max_scale, model_.vit.image_size, epoch_rng);

  const long long step = global_step_;
  StepMetrics metrics;
  metrics.step = step;
  metrics.epoch = epoch;
  metrics.lr = schedule_value(cfg_.lr_base, cfg_.lr_final, step, total_steps(),
                              cfg_.warmup_epochs * steps_per_epoch());
  metrics.wd = schedule_value(cfg_.wd_base, cfg_.wd_final, step, total_steps(), 0);
  metrics.mu = schedule_value(cfg_.mu_base, cfg_.mu_final, step, total_steps(), 0);

  try {
    ForwardAllCache<float> cache;
    const bool use_drop = model_.vit.drop_path > 0.0 && !cfg_.deterministic;
    Rng drop_rng = epoch_rng.child(rng_tag::kDropPath).child(static_cast<std::uint64_t>(batch_index));
    EmbeddingBundle<float> bundle = forward_all<float>(state_, views.view1.images, views.view2.images, views.x3,
                                                       views.x4, &cache, use_drop ? &drop_rng : nullptr);

    Tensor<float> d_p_mul1(bundle.p_mul1.shape);
    Tensor<float> d_p3(bundle.p3.shape);
    grads_.zero();
    metrics.report = total_loss<float>(bundle, views.view1.m2s_labels, views.targets,
                                       static_cast<float>(cfg_.tau), cfg_.losses, &d_p_mul1, &d_p3);
    backward_all<float>(state_, cache, d_p_mul1, d_p3, grads_);

    auto params = state_.trainable();
    auto grad_refs = grads_.refs();
    opt_.step(params, grad_refs, metrics.lr, metrics.wd);

    // Momentum update strictly after the optimizer step.
    std::vector<ParamRef<float>> theta_refs;
    state_.theta.collect("base", theta_refs);
    ema_update<float>(state_.momentum(), theta_refs, metrics.mu);
  } catch (const NumericError &e) {
    throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
  }

  ++global_step_;
  return metrics;
}

std::vector<ParamRef<float>> Trainer::checkpoint_refs() const {
  auto &self = const_cast<Trainer &>(*this);
  std::vector<ParamRef<float>> refs = self.state_.all();
  auto trainable = self.state_.trainable();
  auto &m = self.opt_.first_moments();
  auto &v = self.opt_.second_moments();
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    refs.push_back({"adam.m." + trainable[i].name, &m[i], false});
    refs.push_back({"adam.v." + trainable[i].name, &v[i], false});
  }
  return refs;
}

void Trainer::save_state(const std::string &path) const {
  save_checkpoint(path, checkpoint_refs(), global_step_, cfg_.snapshot(model_));
}

void Trainer::resume_from(const std::string &path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  restore_into(ckpt, checkpoint_refs());
  global_step_ = ckpt.step;
  opt_.set_step_count(ckpt.step);
}

Trainer::Result Trainer::pretrain() {
  Result result;
  const long long per_epoch = steps_per_epoch();

  std::ofstream metrics_file;
  if (!cfg_.out_dir.empty()) {
    metrics_file.open(cfg_.out_dir + "/metrics.jsonl", std::ios::trunc);
    if (!metrics_file.is_open()) throw IoError("trainer: cannot write metrics log in " + cfg_.out_dir);
  }

  const int start_epoch = per_epoch > 0 ? static_cast<int>(global_step_ / per_epoch) : 0;
  for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(epoch);
    const int start_batch = static_cast<int>(global_step_ - static_cast<long long>(epoch) * per_epoch);
    for (int b = start_batch; b < per_epoch; ++b) {
      std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(b) * cfg_.batch_size,
                                   order.begin() + static_cast<std::ptrdiff_t>(b + 1) * cfg_.batch_size);
      StepMetrics metrics = train_step(ids, epoch, b);
      if (metrics_file.is_open()) {
        nlohmann::json line = {{"step", metrics.step},
                               {"epoch", metrics.epoch},
                               {"lr", metrics.lr},
                               {"wd", metrics.wd},
                               {"mu", metrics.mu},
                               {"l_m2s", metrics.report.l_m2s},
                               {"l_m2m", metrics.report.l_m2m},
                               {"l_s2s", metrics.report.l_s2s},
                               {"l_total", metrics.report.l_total}};
        metrics_file << line.dump() << "\n";
      }
      result.history.push_back(metrics);
    }
    if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0 &&
        epoch + 1 < cfg_.epochs) {
      save_state(cfg_.out_dir + "/checkpoint_epoch" + std::to_string(epoch + 1) + ".ckpt");
    }
  }

  if (!cfg_.out_dir.empty()) {
    result.final_checkpoint = cfg_.out_dir + "/final.ckpt";
    save_state(result.final_checkpoint);
    metrics_file.flush();
  }
  return result;
}

GradCheckReport grad_check(const ModelConfig &model, int batch_size, int grid_side, int max_scale,
                           std::uint64_t seed, double fd_step) {
  model.validate();
  EncoderState<double> state = EncoderState<double>::init(model.vit, model.projector_cfg(), model.predictor_cfg(),
                                                          Rng(seed).child(rng_tag::kInit));
  std::size_t param_count = 0;
  for (const auto &ref : state.trainable()) param_count += ref.tensor->size();
  if (param_count > 50000) throw ConfigError("grad_check: configuration too large for finite differences");

  // Fixture batch through the real augmentation + stitching pipeline. The
  // generator's minimum side is 16; micro configs below that get a resize.
  Dataset fixture = generate_synthetic(static_cast<std::size_t>(batch_size), 3,
                                       std::max(16, model.vit.image_size), seed + 1);
  if (model.vit.image_size < 16)
    for (Image &img : fixture.images) img = resize_bilinear(img, model.vit.image_size, model.vit.image_size);
  std::array<AugmentationPolicy, 4> policies = default_policies(model.vit.image_size);
  std::vector<const Image *> batch;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < fixture.size(); ++i) {
    batch.push_back(&fixture.images[i]);
    ids.push_back(i);
  }
  FourViews views = assemble_views(batch, ids, policies, grid_side, max_scale, model.vit.image_size,
                                   Rng(seed).child(7));

  // Freeze the momentum-branch targets once: the loss is differentiated with
  // the z inputs held constant (stop-gradient), so finite differences must
  // see the same function the analytic gradient describes.
  EmbeddingBundle<double> frozen;
  frozen.z_mul2 = head_forward<double>(state.projector, vit_forward<double>(state.xi, model.vit, views.view2.images));
  frozen.z3 = head_forward<double>(state.projector, vit_forward<double>(state.xi, model.vit, views.x3));
  frozen.z4 = head_forward<double>(state.projector, vit_forward<double>(state.xi, model.vit, views.x4));

  const double tau = 0.2;
  const LossFlags flags;

  auto loss_value = [&]() {
    EmbeddingBundle<double> bundle;
    {
      Tensor<double> emb = vit_forward<double>(state.theta, model.vit, views.view1.images);
      bundle.p_mul1 = head_forward<double>(state.predictor, head_forward<double>(state.projector, emb));
    }
    {
      Tensor<double> emb = vit_forward<double>(state.theta, model.vit, views.x3);
      bundle.p3 = head_forward<double>(state.predictor, head_forward<double>(state.projector, emb));
    }
    bundle.z_mul2 = frozen.z_mul2;
    bundle.z3 = frozen.z3;
    bundle.z4 = frozen.z4;
    const LossReport<double> report =
        total_loss<double>(bundle, views.view1.m2s_labels, views.targets, tau, flags, nullptr, nullptr);
    return static_cast<double>(report.l_total);
  };

  // Analytic gradients.
  EncoderGrads<double> grads = EncoderGrads<double>::zeros(state);
  {
    ForwardAllCache<double> cache;
    EmbeddingBundle<double> bundle;
    {
      Tensor<double> emb = vit_forward<double>(state.theta, model.vit, views.view1.images, &cache.vit_mul1);
      Tensor<double> proj = head_forward<double>(state.projector, emb, &cache.proj_mul1);
      bundle.p_mul1 = head_forward<double>(state.predictor, proj, &cache.pred_mul1);
    }
    {
      Tensor<double> emb = vit_forward<double>(state.theta, model.vit, views.x3, &cache.vit_x3);
      Tensor<double> proj = head_forward<double>(state.projector, emb, &cache.proj_x3);
      bundle.p3 = head_forward<double>(state.predictor, proj, &cache.pred_x3);
    }
    bundle.z_mul2 = frozen.z_mul2;
    bundle.z3 = frozen.z3;
    bundle.z4 = frozen.z4;
    Tensor<double> d_p_mul1(bundle.p_mul1.shape);
    Tensor<double> d_p3(bundle.p3.shape);
    total_loss<double>(bundle, views.view1.m2s_labels, views.targets, tau, flags, &d_p_mul1, &d_p3);
    backward_all<double>(state, cache, d_p_mul1, d_p3, grads);
  }

  // Base outputs must be unaffected by momentum parameters: perturb xi and
  // confirm the differentiated path is bit-identical.
  GradCheckReport report;
  {
    EmbeddingBundle<double> before;
    before.p_mul1 = head_forward<double>(
        state.predictor, head_forward<double>(state.projector, vit_forward<double>(state.theta, model.vit, views.view1.images)));
    state.xi.cls_token[0] += 1.0;
    EmbeddingBundle<double> after;
    after.p_mul1 = head_forward<double>(
        state.predictor, head_forward<double>(state.projector, vit_forward<double>(state.theta, model.vit, views.view1.images)));
    state.xi.cls_token[0] -= 1.0;
    report.momentum_isolated = before.p_mul1.data == after.p_mul1.data;
  }

  auto trainable = state.trainable();
  auto grad_refs = grads.refs();
  report.parameters_checked = param_count;
  for (std::size_t t = 0; t < trainable.size(); ++t) {
    Tensor<double> &p = *trainable[t].tensor;
    const Tensor<double> &g = *grad_refs[t].tensor;
    for (std::size_t e = 0; e < p.size(); ++e) {
      const double saved = p[e];
      p[e] = saved + fd_step;
      const double up = loss_value();
      p[e] = saved - fd_step;
      const double down = loss_value();
      p[e] = saved;
      const double fd = (up - down) / (2.0 * fd_step);
      const double denom = std::max({std::abs(fd), std::abs(g[e]), 1e-6});
      const double rel = std::abs(fd - g[e]) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = trainable[t].name + "[" + std::to_string(e) + "]";
      }
    }
  }
  return report;
}

} // namespace mos
