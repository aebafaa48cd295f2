#include "mos/run_config.hpp"

#include <fstream>
#include <set>

#include "mos/cifar10.hpp"
#include "mos/synthetic.hpp"

namespace mos {

namespace {

void reject_unknown(const nlohmann::json &j, const std::set<std::string> &known, const std::string &where) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.find(it.key()) == known.end())
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const nlohmann::json &j, const char *key, T &out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

RunConfig RunConfig::from_json(const nlohmann::json &j) {
  RunConfig cfg;
  reject_unknown(j, {"out_dir", "data", "model", "train", "eval"}, "config root");
  read(j, "out_dir", cfg.out_dir);

  if (j.contains("data")) {
    const auto &d = j.at("data");
    reject_unknown(d, {"type", "path", "test_path", "n", "test_n", "classes", "size", "gen_seed", "test_seed"},
                   "data");
    read(d, "type", cfg.data.type);
    read(d, "path", cfg.data.path);
    read(d, "test_path", cfg.data.test_path);
    read(d, "n", cfg.data.n);
    read(d, "test_n", cfg.data.test_n);
    read(d, "classes", cfg.data.classes);
    read(d, "size", cfg.data.size);
    read(d, "gen_seed", cfg.data.gen_seed);
    read(d, "test_seed", cfg.data.test_seed);
  }

  if (j.contains("model")) {
    const auto &m = j.at("model");
    reject_unknown(m,
                   {"image_size", "patch_size", "embed_dim", "depth", "heads", "mlp_ratio", "drop_path",
                    "proj_hidden", "proj_dim", "head_norm"},
                   "model");
    read(m, "image_size", cfg.model.vit.image_size);
    read(m, "patch_size", cfg.model.vit.patch_size);
    read(m, "embed_dim", cfg.model.vit.embed_dim);
    read(m, "depth", cfg.model.vit.depth);
    read(m, "heads", cfg.model.vit.heads);
    read(m, "mlp_ratio", cfg.model.vit.mlp_ratio);
    read(m, "drop_path", cfg.model.vit.drop_path);
    read(m, "proj_hidden", cfg.model.proj_hidden);
    read(m, "proj_dim", cfg.model.proj_dim);
    if (m.contains("head_norm")) {
      const auto kind = m.at("head_norm").get<std::string>();
      if (kind == "layer")
        cfg.model.head_norm = NormKind::Layer;
      else if (kind == "batch")
        cfg.model.head_norm = NormKind::Batch;
      else
        throw ConfigError("config: head_norm must be 'layer' or 'batch'");
    }
  }

  if (j.contains("train")) {
    const auto &t = j.at("train");
    reject_unknown(t,
                   {"epochs", "warmup_epochs", "batch_size", "lr_base", "lr_final", "wd_base", "wd_final",
                    "mu_base", "mu_final", "tau", "r_choices", "max_scale", "seed", "beta1", "beta2", "adam_eps",
                    "deterministic", "use_s2s", "use_m2s", "use_m2m", "checkpoint_every"},
                   "train");
    read(t, "epochs", cfg.train.epochs);
    read(t, "warmup_epochs", cfg.train.warmup_epochs);
    read(t, "batch_size", cfg.train.batch_size);
    read(t, "lr_base", cfg.train.lr_base);
    read(t, "lr_final", cfg.train.lr_final);
    read(t, "wd_base", cfg.train.wd_base);
    read(t, "wd_final", cfg.train.wd_final);
    read(t, "mu_base", cfg.train.mu_base);
    read(t, "mu_final", cfg.train.mu_final);
    read(t, "tau", cfg.train.tau);
    read(t, "r_choices", cfg.train.r_choices);
    read(t, "max_scale", cfg.train.max_scale);
    read(t, "seed", cfg.train.seed);
    read(t, "beta1", cfg.train.beta1);
    read(t, "beta2", cfg.train.beta2);
    read(t, "adam_eps", cfg.train.adam_eps);
    read(t, "deterministic", cfg.train.deterministic);
    read(t, "use_s2s", cfg.train.losses.use_s2s);
    read(t, "use_m2s", cfg.train.losses.use_m2s);
    read(t, "use_m2m", cfg.train.losses.use_m2m);
    read(t, "checkpoint_every", cfg.train.checkpoint_every);
  }

  if (j.contains("eval")) {
    const auto &e = j.at("eval");
    reject_unknown(e, {"knn_k", "knn_tau", "probe_epochs", "probe_lr"}, "eval");
    read(e, "knn_k", cfg.eval.knn_k);
    read(e, "knn_tau", cfg.eval.knn_tau);
    read(e, "probe_epochs", cfg.eval.probe_epochs);
    read(e, "probe_lr", cfg.eval.probe_lr);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string &path) {
  std::ifstream file(path);
  if (!file.is_open()) throw DataError("config: cannot open " + path);
  nlohmann::json j;
  try {
    file >> j;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config: parse error in ") + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["out_dir"] = out_dir;
  j["data"] = {{"type", data.type}, {"path", data.path},       {"test_path", data.test_path},
               {"n", data.n},       {"test_n", data.test_n},   {"classes", data.classes},
               {"size", data.size}, {"gen_seed", data.gen_seed}, {"test_seed", data.test_seed}};
  j["model"] = {{"image_size", model.vit.image_size},
                {"patch_size", model.vit.patch_size},
                {"embed_dim", model.vit.embed_dim},
                {"depth", model.vit.depth},
                {"heads", model.vit.heads},
                {"mlp_ratio", model.vit.mlp_ratio},
                {"drop_path", model.vit.drop_path},
                {"proj_hidden", model.proj_hidden},
                {"proj_dim", model.proj_dim},
                {"head_norm", model.head_norm == NormKind::Layer ? "layer" : "batch"}};
  j["train"] = {{"epochs", train.epochs},
                {"warmup_epochs", train.warmup_epochs},
                {"batch_size", train.batch_size},
                {"lr_base", train.lr_base},
                {"lr_final", train.lr_final},
                {"wd_base", train.wd_base},
                {"wd_final", train.wd_final},
                {"mu_base", train.mu_base},
                {"mu_final", train.mu_final},
                {"tau", train.tau},
                {"r_choices", train.r_choices},
                {"max_scale", train.max_scale},
                {"seed", train.seed},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"adam_eps", train.adam_eps},
                {"deterministic", train.deterministic},
                {"use_s2s", train.losses.use_s2s},
                {"use_m2s", train.losses.use_m2s},
                {"use_m2m", train.losses.use_m2m},
                {"checkpoint_every", train.checkpoint_every}};
  j["eval"] = {{"knn_k", eval.knn_k}, {"knn_tau", eval.knn_tau}, {"probe_epochs", eval.probe_epochs},
               {"probe_lr", eval.probe_lr}};
  return j;
}

void RunConfig::validate() const {
  if (data.type != "synthetic" && data.type != "cifar10")
    throw ConfigError("config: data.type must be 'synthetic' or 'cifar10'");
  if (data.type == "cifar10" && data.path.empty()) throw ConfigError("config: cifar10 data requires data.path");
  train.validate(model);
  if (eval.knn_k < 1 || eval.knn_tau <= 0.0) throw ConfigError("config: bad kNN parameters");
  if (eval.probe_epochs < 0 || eval.probe_lr < 0.0) throw ConfigError("config: bad probe parameters");
}

Dataset RunConfig::load_train_dataset() const {
  if (data.type == "cifar10") return load_cifar10(data.path);
  return generate_synthetic(static_cast<std::size_t>(data.n), data.classes, data.size, data.gen_seed);
}

Dataset RunConfig::load_test_dataset() const {
  if (data.type == "cifar10") {
    if (data.test_path.empty()) throw ConfigError("config: cifar10 eval requires data.test_path");
    return load_cifar10(data.test_path);
  }
  return generate_synthetic(static_cast<std::size_t>(data.test_n), data.classes, data.size, data.test_seed);
}

} // namespace mos
