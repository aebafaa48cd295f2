#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mos/cifar10.hpp"
#include "mos/cli.hpp"
#include "mos/ppm.hpp"
#include "mos/run_config.hpp"

using namespace mos;

namespace {

std::string temp_dir(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string write_config(const std::string &dir, const nlohmann::json &j) {
  const std::string path = dir + "/config.json";
  std::ofstream f(path, std::ios::trunc);
  f << j.dump(2);
  return path;
}

} // namespace

TEST_CASE("stitch-preview emits PPMs whose tiles match the sidecar provenance") {
  const std::string dir = temp_dir("mos_cli_preview");
  const std::string cfg_path = write_config(dir, {{"out_dir", dir}, {"data", {{"size", 16}, {"classes", 3}}}});
  const int rc = run_cli({"--config", cfg_path, "stitch-preview", "--n", "3", "--r", "2", "--S", "1"});
  REQUIRE(rc == 0);

  std::ifstream side(dir + "/preview/batch.json");
  REQUIRE(side.is_open());
  nlohmann::json sidecar;
  side >> sidecar;

  const int n = sidecar.at("batch").get<int>();
  const int tiles = sidecar.at("tiles_per_image").get<int>();
  REQUIRE(n == 3);
  REQUIRE(tiles == 4);

  // Re-derive the m2s labels from the cyclic rule and compare.
  const auto y = sidecar.at("y_m2s").get<std::vector<std::vector<int>>>();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < tiles; ++j) REQUIRE(y[i][j] == (i + j) % n);

  // Provenance must agree with the labels, and the stitched pixels must
  // equal the exported source tiles blockwise.
  const auto provenance = sidecar.at("provenance");
  const auto tile_files = sidecar.at("tiles").get<std::vector<std::vector<std::string>>>();
  for (int i = 0; i < n; ++i) {
    Image stitched = read_ppm(dir + "/preview/stitched_" + std::to_string(i) + ".ppm");
    REQUIRE(stitched.height == 16);
    for (int j = 0; j < tiles; ++j) {
      const int source = provenance[i][j].at("source").get<int>();
      REQUIRE(source == y[i][j]);
      REQUIRE(provenance[i][j].at("slot").get<int>() == j);
      Image tile = read_ppm(dir + "/preview/" + tile_files[source][j]);
      REQUIRE(tile.height == 8);
      const int oy = (j / 2) * 8, ox = (j % 2) * 8;
      for (int yy = 0; yy < 8; ++yy)
        for (int xx = 0; xx < 8; ++xx)
          for (int c = 0; c < 3; ++c) REQUIRE(stitched.at(oy + yy, ox + xx, c) == tile.at(yy, xx, c));
    }
  }

  // Permutation in the sidecar matches the closed form.
  const auto q = sidecar.at("q").get<std::vector<std::size_t>>();
  for (std::size_t t = 0; t < q.size(); ++t) REQUIRE(q[t] == (t + (t % 4) * 4) % 12);
  std::filesystem::remove_all(dir);
}

TEST_CASE("stitch-preview sidecar carries reconstructible m2m targets when valid") {
  const std::string dir = temp_dir("mos_cli_preview_m2m");
  const std::string cfg_path = write_config(dir, {{"out_dir", dir}, {"data", {{"size", 16}, {"classes", 3}}}});
  const int rc = run_cli({"--config", cfg_path, "stitch-preview", "--n", "9", "--r", "2", "--S", "1"});
  REQUIRE(rc == 0);
  std::ifstream side(dir + "/preview/batch.json");
  nlohmann::json sidecar;
  side >> sidecar;
  REQUIRE(sidecar.at("m2m_valid").get<bool>());
  const auto labels = sidecar.at("y_m2m").get<std::vector<std::vector<int>>>();
  const auto scores = sidecar.at("w_m2m").get<std::vector<std::vector<double>>>();
  REQUIRE(labels.size() == 9);
  REQUIRE(labels[0].size() == 7);
  for (int i = 0; i < 9; ++i)
    for (int l = 0; l < 7; ++l) {
      REQUIRE(labels[i][l] == static_cast<int>((i + 9 + l + 1 - 4) % 9));
      REQUIRE(scores[i][l] == (4.0 - std::abs(4.0 - 1.0 - l)) / 4.0);
    }
  std::filesystem::remove_all(dir);
}

TEST_CASE("verify-targets succeeds over the sweep") {
  CHECK(run_cli({"verify-targets", "--max-n", "16"}) == 0);
}

TEST_CASE("missing dataset file exits with the data-error code") {
  const std::string dir = temp_dir("mos_cli_missing");
  const std::string cfg_path = write_config(
      dir, {{"out_dir", dir},
            {"data", {{"type", "cifar10"}, {"path", dir + "/nonexistent.bin"}}},
            {"train", {{"epochs", 1}, {"warmup_epochs", 0}, {"batch_size", 8}, {"r_choices", {1}}, {"max_scale", 1}}},
            {"model", {{"image_size", 32}, {"patch_size", 4}, {"embed_dim", 16}, {"depth", 1}, {"heads", 2}}}});
  CHECK(run_cli({"--config", cfg_path, "pretrain"}) == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unknown config keys are rejected with the usage code") {
  const std::string dir = temp_dir("mos_cli_badkey");
  const std::string cfg_path = write_config(dir, {{"out_dir", dir}, {"datas", {{"type", "synthetic"}}}});
  CHECK(run_cli({"--config", cfg_path, "verify-targets"}) == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid batch/grid combination is reported before any compute") {
  const std::string dir = temp_dir("mos_cli_smallbatch");
  // batch_size 4 < 2*2^2-1 = 7.
  const std::string cfg_path = write_config(
      dir, {{"out_dir", dir},
            {"data", {{"size", 16}, {"classes", 3}, {"n", 32}}},
            {"model", {{"image_size", 16}, {"patch_size", 4}, {"embed_dim", 16}, {"depth", 1}, {"heads", 2}}},
            {"train", {{"epochs", 1}, {"warmup_epochs", 0}, {"batch_size", 4}}}});
  CHECK(run_cli({"--config", cfg_path, "pretrain"}) == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("export-synthetic writes loadable CIFAR records") {
  const std::string dir = temp_dir("mos_cli_export");
  const std::string cfg_path =
      write_config(dir, {{"out_dir", dir}, {"data", {{"n", 10}, {"classes", 4}, {"size", 32}}}});
  const std::string out = dir + "/synthetic.bin";
  REQUIRE(run_cli({"--config", cfg_path, "export-synthetic", "--out", out}) == 0);
  Dataset ds = load_cifar10(out);
  CHECK(ds.size() == 10);
  CHECK(ds.labels[0] == 0);
  CHECK(ds.labels[1] == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("pretrain then eval-knn runs end to end on a tiny config") {
  const std::string dir = temp_dir("mos_cli_endtoend");
  nlohmann::json cfg = {
      {"out_dir", dir},
      {"data", {{"size", 8}, {"classes", 3}, {"n", 32}, {"test_n", 16}}},
      {"model",
       {{"image_size", 8}, {"patch_size", 2}, {"embed_dim", 16}, {"depth", 1}, {"heads", 2}, {"mlp_ratio", 2.0},
        {"proj_hidden", 16}, {"proj_dim", 8}}},
      {"train",
       {{"epochs", 1}, {"warmup_epochs", 0}, {"batch_size", 8}, {"r_choices", {1, 2}}, {"max_scale", 2}}},
      {"eval", {{"knn_k", 5}}}};
  const std::string cfg_path = write_config(dir, cfg);
  REQUIRE(run_cli({"--config", cfg_path, "pretrain"}) == 0);
  REQUIRE(std::filesystem::exists(dir + "/final.ckpt"));
  REQUIRE(std::filesystem::exists(dir + "/config.json"));
  REQUIRE(std::filesystem::exists(dir + "/metrics.jsonl"));
  REQUIRE(run_cli({"--config", cfg_path, "eval-knn", "--checkpoint", dir + "/final.ckpt"}) == 0);
  REQUIRE(run_cli({"--config", cfg_path, "eval-linear", "--checkpoint", dir + "/final.ckpt"}) == 0);
  CHECK(std::filesystem::exists(dir + "/eval.jsonl"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("config file round-trips through to_json/from_json") {
  RunConfig cfg;
  cfg.out_dir = "somewhere";
  cfg.train.epochs = 42;
  cfg.model.vit.embed_dim = 24;
  cfg.data.classes = 5;
  RunConfig again = RunConfig::from_json(cfg.to_json());
  CHECK(again.out_dir == "somewhere");
  CHECK(again.train.epochs == 42);
  CHECK(again.model.vit.embed_dim == 24);
  CHECK(again.data.classes == 5);
}
