#include "mos/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mos/checkpoint.hpp"
#include "mos/cifar10.hpp"
#include "mos/eval.hpp"
#include "mos/ppm.hpp"
#include "mos/run_config.hpp"
#include "mos/synthetic.hpp"
#include "mos/trainer.hpp"

namespace mos {

namespace {

void echo_config(const RunConfig &cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/config.json", std::ios::trunc);
  out << cfg.to_json().dump(2) << "\n";
}

void append_metrics(const RunConfig &cfg, const nlohmann::json &record) {
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/eval.jsonl", std::ios::app);
  out << record.dump() << "\n";
}

void load_encoder_from_checkpoint(const std::string &path, EncoderState<float> &state) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  restore_into(ckpt, state.all());
}

int cmd_pretrain(const RunConfig &cfg, const std::string &resume) {
  Trainer trainer(cfg.load_train_dataset(), cfg.model, cfg.train);
  if (!resume.empty()) trainer.resume_from(resume);
  echo_config(cfg);
  Trainer::Result result = trainer.pretrain();
  nlohmann::json summary = {{"steps", result.history.size()}, {"checkpoint", result.final_checkpoint}};
  if (!result.history.empty()) summary["final_l_total"] = result.history.back().report.l_total;
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_eval(const RunConfig &cfg, const std::string &checkpoint, bool linear, const std::string &features_out) {
  Dataset train_ds = cfg.load_train_dataset();
  Dataset test_ds = cfg.load_test_dataset();
  ChannelStats stats = compute_channel_stats(train_ds);

  EncoderState<float> state = EncoderState<float>::init(cfg.model.vit, cfg.model.projector_cfg(),
                                                        cfg.model.predictor_cfg(), Rng(cfg.train.seed).child(rng_tag::kInit));
  load_encoder_from_checkpoint(checkpoint, state);

  FeatureMatrix train_fm = extract_features(train_ds, state.theta, cfg.model.vit, stats);
  FeatureMatrix test_fm = extract_features(test_ds, state.theta, cfg.model.vit, stats);
  if (!features_out.empty()) save_features(train_fm, features_out);

  nlohmann::json record;
  if (linear) {
    const double acc = linear_probe(train_fm, test_fm, cfg.eval.probe_epochs, cfg.eval.probe_lr, cfg.train.seed);
    record = {{"protocol", "linear"}, {"accuracy", acc}, {"probe_epochs", cfg.eval.probe_epochs},
              {"probe_lr", cfg.eval.probe_lr}, {"checkpoint", checkpoint}};
  } else {
    const double acc = knn_eval(train_fm, test_fm, cfg.eval.knn_k, cfg.eval.knn_tau);
    record = {{"protocol", "knn"}, {"accuracy", acc}, {"k", cfg.eval.knn_k},
              {"knn_tau", cfg.eval.knn_tau}, {"checkpoint", checkpoint}};
  }
  append_metrics(cfg, record);
  std::cout << record.dump() << std::endl;
  return 0;
}

int cmd_stitch_preview(const RunConfig &cfg, int n, int grid_side, int max_scale, std::uint64_t seed) {
  const int size = cfg.data.type == "cifar10" ? kCifarSide : cfg.data.size;
  StitchConfig stitch_cfg{grid_side, max_scale, size};
  stitch_cfg.validate();

  Dataset ds;
  if (cfg.data.type == "cifar10") {
    ds = load_cifar10(cfg.data.path);
    if (ds.size() < static_cast<std::size_t>(n)) throw DataError("stitch-preview: dataset smaller than batch");
  } else {
    ds = generate_synthetic(static_cast<std::size_t>(n), cfg.data.classes, size, cfg.data.gen_seed);
  }

  // Identity normalization so the PPM bytes are faithful pixels.
  std::array<AugmentationPolicy, 4> policies = default_policies(size);
  const Rng epoch_rng = Rng(seed).child(0);

  std::vector<ViewGrid> grids;
  for (int i = 0; i < n; ++i) {
    const Rng sample_rng = epoch_rng.child(static_cast<std::uint64_t>(i));
    grids.push_back(build_view_grid(ds.images[i], stitch_cfg, policies[0], sample_rng.child(rng_tag::kView1),
                                    static_cast<std::size_t>(i)));
  }
  StitchedBatch batch = stitch_batch(grids, stitch_cfg);

  const std::string dir = cfg.out_dir + "/preview";
  std::filesystem::create_directories(dir);

  nlohmann::json sidecar;
  sidecar["batch"] = n;
  sidecar["grid_side"] = grid_side;
  sidecar["tiles_per_image"] = stitch_cfg.tiles_per_image();
  sidecar["max_scale"] = max_scale;
  sidecar["t"] = batch.permutation.t;
  sidecar["q"] = batch.permutation.q;
  sidecar["y_m2s"] = batch.m2s_labels;

  const std::size_t tiles = stitch_cfg.tiles_per_image();
  const bool m2m_valid = static_cast<std::size_t>(n) >= 2 * tiles - 1;
  sidecar["m2m_valid"] = m2m_valid;
  if (m2m_valid) {
    CorrespondenceTargets targets = m2m_targets(static_cast<std::size_t>(n), tiles);
    sidecar["y_m2m"] = targets.labels;
    sidecar["w_m2m"] = targets.scores;
  }

  auto images = nlohmann::json::array();
  auto tile_files = nlohmann::json::array();
  auto provenance = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    const std::string name = "stitched_" + std::to_string(i) + ".ppm";
    write_ppm(batch.images[i], dir + "/" + name);
    images.push_back(name);

    auto row_tiles = nlohmann::json::array();
    for (std::size_t j = 0; j < tiles; ++j) {
      const std::string tile_name = "tile_" + std::to_string(i) + "_" + std::to_string(j) + ".ppm";
      write_ppm(grids[i].tiles[j].pixels, dir + "/" + tile_name);
      row_tiles.push_back(tile_name);
    }
    tile_files.push_back(row_tiles);

    auto row_prov = nlohmann::json::array();
    for (std::size_t j = 0; j < tiles; ++j) {
      const TileProvenance &p = batch.provenance[i][j];
      row_prov.push_back({{"source", p.source}, {"slot", p.slot}, {"scale", p.scale}});
    }
    provenance.push_back(row_prov);
  }
  sidecar["images"] = images;
  sidecar["tiles"] = tile_files;
  sidecar["provenance"] = provenance;

  std::ofstream side(dir + "/batch.json", std::ios::trunc);
  side << sidecar.dump(2) << "\n";
  std::cout << nlohmann::json({{"preview_dir", dir}, {"images", n}}).dump() << std::endl;
  return 0;
}

int cmd_grad_check(double tolerance) {
  ModelConfig micro;
  micro.vit = ViTConfig{8, 2, 16, 2, 2, 4.0, 0.0};
  micro.proj_hidden = 32;
  micro.proj_dim = 16;
  GradCheckReport report = grad_check(micro, 8, 2, 1, 11);
  nlohmann::json record = {{"max_rel_error", report.max_rel_error},
                           {"worst_param", report.worst_param},
                           {"parameters_checked", report.parameters_checked},
                           {"momentum_isolated", report.momentum_isolated},
                           {"tolerance", tolerance}};
  std::cout << record.dump() << std::endl;
  if (!report.momentum_isolated || report.max_rel_error > tolerance) {
    std::cerr << "grad-check failed: worst parameter " << report.worst_param << std::endl;
    return 3;
  }
  return 0;
}

int cmd_verify_targets(int max_n) {
  const std::vector<std::size_t> tile_counts = {1, 3, 4, 9};
  long long checked = 0;
  for (int n = 1; n <= max_n; ++n) {
    for (std::size_t m : tile_counts) {
      const auto batch = static_cast<std::size_t>(n);
      StitchPermutation perm = stitch_permutation(batch, m);
      std::vector<bool> seen(perm.total(), false);
      for (std::size_t t = 0; t < perm.total(); ++t) {
        if (seen[perm.q[t]]) {
          std::cerr << "verify-targets: q not a bijection at N=" << n << " M=" << m << std::endl;
          return 3;
        }
        seen[perm.q[t]] = true;
        const std::size_t i = t / m, j = t % m;
        if (perm.q[t] != ((i + j) % batch) * m + j) {
          std::cerr << "verify-targets: q mismatch vs nested-loop form at N=" << n << " M=" << m << std::endl;
          return 3;
        }
      }
      if (batch >= 2 * m - 1) {
        CorrespondenceTargets targets = m2m_targets(batch, m);
        for (std::size_t i = 0; i < batch; ++i) {
          for (std::size_t l = 0; l < 2 * m - 1; ++l) {
            const auto expected = static_cast<double>(overlap_oracle(i, targets.labels[i][l], batch, m));
            if (targets.scores[i][l] * static_cast<double>(m) != expected) {
              std::cerr << "verify-targets: score mismatch at N=" << n << " M=" << m << " i=" << i << " l=" << l
                        << std::endl;
              return 3;
            }
            ++checked;
          }
        }
      }
      ++checked;
    }
  }
  std::cout << nlohmann::json({{"max_n", max_n}, {"comparisons", checked}, {"all_equal", true}}).dump()
            << std::endl;
  return 0;
}

int cmd_export_synthetic(const RunConfig &cfg, const std::string &out_path) {
  Dataset ds = generate_synthetic(static_cast<std::size_t>(cfg.data.n), cfg.data.classes, kCifarSide,
                                  cfg.data.gen_seed);
  save_cifar10(ds, out_path);
  std::cout << nlohmann::json({{"records", ds.size()}, {"path", out_path}}).dump() << std::endl;
  return 0;
}

} // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"Multiple-object-stitching pretraining and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  std::string out_dir, resume, checkpoint, features_out, export_path;
  std::uint64_t seed_flag = 0;
  bool seed_set = false;
  int flag_epochs = -1, flag_batch = -1;

  auto *pretrain = app.add_subcommand("pretrain", "Run self-supervised pretraining");
  pretrain->add_option("--out-dir", out_dir, "Output directory override");
  pretrain->add_option("--resume", resume, "Checkpoint to resume from");
  pretrain->add_option("--epochs", flag_epochs, "Epoch count override");
  pretrain->add_option("--batch-size", flag_batch, "Batch size override");
  pretrain->add_option("--seed", seed_flag, "Seed override")->each([&](const std::string &) { seed_set = true; });

  auto *eval_knn = app.add_subcommand("eval-knn", "kNN evaluation of frozen features");
  eval_knn->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval_knn->add_option("--out-dir", out_dir, "Output directory override");
  eval_knn->add_option("--save-features", features_out, "Also export the train features");

  auto *eval_linear = app.add_subcommand("eval-linear", "Linear-probe evaluation of frozen features");
  eval_linear->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval_linear->add_option("--out-dir", out_dir, "Output directory override");
  eval_linear->add_option("--save-features", features_out, "Also export the train features");

  int preview_n = 3, preview_r = 2, preview_s = 1;
  std::uint64_t preview_seed = 1;
  auto *preview = app.add_subcommand("stitch-preview", "Export one stitched batch as PPM + JSON sidecar");
  preview->add_option("--n", preview_n, "Batch size");
  preview->add_option("--r", preview_r, "Grid side");
  preview->add_option("--S", preview_s, "Max scale factor");
  preview->add_option("--seed", preview_seed, "Preview seed");
  preview->add_option("--out-dir", out_dir, "Output directory override");

  double gc_tolerance = 1e-4;
  auto *gradcheck = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  gradcheck->add_option("--tolerance", gc_tolerance, "Max relative error allowed");

  int verify_max_n = 32;
  auto *verify = app.add_subcommand("verify-targets", "Check permutation and overlap-score identities");
  verify->add_option("--max-n", verify_max_n, "Largest batch size to sweep");

  auto *exporter = app.add_subcommand("export-synthetic", "Write the synthetic dataset in CIFAR-10 record format");
  exporter->add_option("--out", export_path, "Output file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (flag_epochs >= 0) cfg.train.epochs = flag_epochs;
    if (flag_batch >= 0) cfg.train.batch_size = flag_batch;
    if (seed_set) cfg.train.seed = seed_flag;

    if (app.got_subcommand(pretrain)) {
      cfg.validate();
      return cmd_pretrain(cfg, resume);
    }
    if (app.got_subcommand(eval_knn)) {
      cfg.validate();
      return cmd_eval(cfg, checkpoint, false, features_out);
    }
    if (app.got_subcommand(eval_linear)) {
      cfg.validate();
      return cmd_eval(cfg, checkpoint, true, features_out);
    }
    if (app.got_subcommand(preview)) return cmd_stitch_preview(cfg, preview_n, preview_r, preview_s, preview_seed);
    if (app.got_subcommand(gradcheck)) return cmd_grad_check(gc_tolerance);
    if (app.got_subcommand(verify)) return cmd_verify_targets(verify_max_n);
    if (app.got_subcommand(exporter)) return cmd_export_synthetic(cfg, export_path);
    return 1;
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const DataError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const IoError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const ShapeError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const NumericError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
}

} // namespace mos
