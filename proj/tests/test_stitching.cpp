#include <doctest.h>

#include <numeric>

#include "mos/stitching.hpp"
#include "mos/synthetic.hpp"

using namespace mos;

namespace {

Image constant_image(int side, float value) {
  Image img(side, side, 3);
  for (float &v : img.pixels) v = value;
  return img;
}

} // namespace

TEST_CASE("stitch_permutation matches the hand-derived N=3, M=4 layout") {
  StitchPermutation p = stitch_permutation(3, 4);
  const std::vector<std::size_t> expected = {0, 5, 10, 3, 4, 9, 2, 7, 8, 1, 6, 11};
  CHECK(p.q == expected);
  CHECK(p.t.size() == 12);
  CHECK(p.t.front() == 0);
  CHECK(p.t.back() == 11);
}

TEST_CASE("stitch_permutation degenerates to identity for N=1 or M=1") {
  for (std::size_t m : {1u, 4u, 9u}) {
    StitchPermutation p = stitch_permutation(1, m);
    CHECK(p.q == p.t);
  }
  for (std::size_t n : {1u, 5u, 17u}) {
    StitchPermutation p = stitch_permutation(n, 1);
    CHECK(p.q == p.t);
  }
}

TEST_CASE("stitch_permutation is a bijection that factors as u(i,j)") {
  for (std::size_t n = 1; n <= 64; ++n) {
    for (std::size_t m : {1u, 4u, 9u}) {
      StitchPermutation p = stitch_permutation(n, m);
      std::vector<bool> seen(n * m, false);
      for (std::size_t t = 0; t < n * m; ++t) {
        REQUIRE(p.q[t] < n * m);
        REQUIRE_FALSE(seen[p.q[t]]);
        seen[p.q[t]] = true;
        const std::size_t i = t / m, j = t % m;
        REQUIRE(p.q[t] == ((i + j) % n) * m + j);
      }
    }
  }
}

TEST_CASE("inverting the permutation reconstructs the original tile stream") {
  const std::size_t n = 6, m = 4;
  StitchPermutation p = stitch_permutation(n, m);
  std::vector<int> stream(n * m);
  std::iota(stream.begin(), stream.end(), 0);
  std::vector<int> stitched(n * m), recovered(n * m);
  for (std::size_t t = 0; t < n * m; ++t) stitched[t] = stream[p.q[t]];
  for (std::size_t t = 0; t < n * m; ++t) recovered[p.q[t]] = stitched[t];
  CHECK(recovered == stream);
}

TEST_CASE("m2s labels expand u(i,j)") {
  const auto labels = m2s_labels(3, 4);
  CHECK(labels == std::vector<std::vector<int>>{{0, 1, 2, 0}, {1, 2, 0, 1}, {2, 0, 1, 2}});

  const auto single = m2s_labels(5, 1);
  for (int i = 0; i < 5; ++i) CHECK(single[i] == std::vector<int>{i});

  const auto wide = m2s_labels(9, 3);
  CHECK(wide[1] == std::vector<int>{1, 2, 3});
}

TEST_CASE("m2m targets reproduce the appendix worked example") {
  CorrespondenceTargets targets = m2m_targets(9, 3);
  CHECK(targets.labels[1] == std::vector<int>{8, 0, 1, 2, 3});
  // Score row must equal (1/3, 2/3, 1, 2/3, 1/3) exactly.
  const std::vector<double> expected = {1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0};
  CHECK(targets.scores[4] == expected);
  for (std::size_t i = 0; i < 9; ++i) CHECK(targets.scores[i] == expected);
}

TEST_CASE("m2m reduces to one-hot instance discrimination at M=1") {
  CorrespondenceTargets targets = m2m_targets(5, 1);
  for (int i = 0; i < 5; ++i) {
    CHECK(targets.labels[i] == std::vector<int>{i});
    CHECK(targets.scores[i] == std::vector<double>{1.0});
  }
}

TEST_CASE("m2m rejects batches smaller than 2M-1") {
  CHECK_THROWS_AS(m2m_targets(6, 4), ConfigError);
  CHECK_NOTHROW(m2m_targets(7, 4));
}

TEST_CASE("score rows are palindromic, peak at the center, end at 1/M, sum to M") {
  for (std::size_t m : {1u, 3u, 4u, 9u}) {
    CorrespondenceTargets targets = m2m_targets(2 * m - 1 + 3, m);
    const auto &row = targets.scores[0];
    REQUIRE(row.size() == 2 * m - 1);
    CHECK(row[m - 1] == 1.0);
    CHECK(row.front() == 1.0 / static_cast<double>(m));
    CHECK(row.back() == 1.0 / static_cast<double>(m));
    for (std::size_t l = 0; l < row.size(); ++l) CHECK(row[l] == row[row.size() - 1 - l]);
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    CHECK(sum == doctest::Approx(static_cast<double>(m)).epsilon(1e-12));
  }
}

TEST_CASE("overlap oracle: explicit window intersections") {
  CHECK(overlap_oracle(1, 0, 9, 3) == 2); // {1,2,3} vs {0,1,2}
  CHECK(overlap_oracle(4, 4, 9, 3) == 3); // identical windows
  CHECK(overlap_oracle(0, 4, 9, 3) == 0); // disjoint windows
}

TEST_CASE("scores times M equal brute-force window intersections") {
  for (std::size_t m : {1u, 3u, 4u, 9u}) {
    for (std::size_t n = 2 * m - 1; n <= 40; ++n) {
      CorrespondenceTargets targets = m2m_targets(n, m);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < 2 * m - 1; ++l) {
          const auto count = overlap_oracle(i, static_cast<std::size_t>(targets.labels[i][l]), n, m);
          REQUIRE(targets.scores[i][l] * static_cast<double>(m) == static_cast<double>(count));
        }
      }
    }
  }
}

TEST_CASE("stitch_group: s=1 returns the single view unchanged") {
  Image v = constant_image(8, 0.25f);
  Image out = stitch_group({v}, 1);
  CHECK(out.pixels == v.pixels);
}

TEST_CASE("stitch_group places four views row-major") {
  Image a = constant_image(8, 0.1f), b = constant_image(8, 0.3f);
  Image c = constant_image(8, 0.6f), d = constant_image(8, 0.9f);
  Image out = stitch_group({a, b, c, d}, 2);
  REQUIRE(out.height == 16);
  REQUIRE(out.width == 16);
  CHECK(out.at(0, 0, 0) == 0.1f);   // top-left
  CHECK(out.at(0, 15, 0) == 0.3f);  // top-right
  CHECK(out.at(15, 0, 0) == 0.6f);  // bottom-left
  CHECK(out.at(15, 15, 0) == 0.9f); // bottom-right
}

TEST_CASE("stitch_group rejects wrong counts and mixed sizes") {
  Image v = constant_image(8, 0.5f);
  CHECK_THROWS_AS(stitch_group({v, v, v}, 2), ShapeError);
  CHECK_THROWS_AS(stitch_group({v, v, v, constant_image(4, 0.5f)}, 2), ShapeError);
}

TEST_CASE("multi_view_augment produces (s*r)^2 views of side H/(s*r)") {
  Dataset ds = generate_synthetic(1, 3, 16, 4);
  AugmentationPolicy policy;

  auto views = multi_view_augment(ds.images[0], 2, 1, policy, Rng(1));
  CHECK(views.size() == 4);
  CHECK(views[0].height == 8);

  views = multi_view_augment(ds.images[0], 2, 2, policy, Rng(1));
  CHECK(views.size() == 16);
  CHECK(views[0].height == 4);

  views = multi_view_augment(ds.images[0], 1, 1, policy, Rng(1));
  CHECK(views.size() == 1);
  CHECK(views[0].height == 16);

  CHECK_THROWS_AS(multi_view_augment(ds.images[0], 3, 1, policy, Rng(1)), ConfigError);
}

TEST_CASE("build_view_grid: S=1 forces scale 1 everywhere; fixed rng repeats") {
  Dataset ds = generate_synthetic(1, 3, 16, 4);
  StitchConfig cfg{2, 1, 16};
  AugmentationPolicy policy;
  ViewGrid grid = build_view_grid(ds.images[0], cfg, policy, Rng(5));
  REQUIRE(grid.tiles.size() == 4);
  for (const auto &tile : grid.tiles) {
    CHECK(tile.scale == 1);
    CHECK(tile.sub_views.size() == 1);
    CHECK(tile.pixels.height == 8);
  }

  ViewGrid again = build_view_grid(ds.images[0], cfg, policy, Rng(5));
  for (std::size_t j = 0; j < 4; ++j) CHECK(grid.tiles[j].pixels.pixels == again.tiles[j].pixels.pixels);
}

TEST_CASE("build_view_grid: each tile holds scale^2 sub-views") {
  Dataset ds = generate_synthetic(1, 3, 16, 4);
  StitchConfig cfg{2, 2, 16};
  AugmentationPolicy policy;
  ViewGrid grid = build_view_grid(ds.images[0], cfg, policy, Rng(6));
  for (const auto &tile : grid.tiles) {
    CHECK(tile.sub_views.size() == static_cast<std::size_t>(tile.scale) * tile.scale);
    CHECK(tile.pixels.height == 8);
  }
}

TEST_CASE("scale sampling is uniform over {1..S}") {
  Dataset ds = generate_synthetic(1, 3, 16, 4);
  StitchConfig cfg{2, 2, 16};
  AugmentationPolicy policy;
  std::size_t draws = 0, twos = 0;
  for (int g = 0; g < 2500; ++g) {
    ViewGrid grid = build_view_grid(ds.images[0], cfg, policy, Rng(g));
    for (const auto &tile : grid.tiles) {
      ++draws;
      if (tile.scale == 2) ++twos;
    }
  }
  REQUIRE(draws == 10000);
  CHECK(std::abs(static_cast<double>(twos) / draws - 0.5) < 0.03);
}

TEST_CASE("stitch_batch follows the cyclic source pattern with exact pixels") {
  const int n = 3;
  StitchConfig cfg{2, 1, 16};
  std::vector<ViewGrid> grids(n);
  for (int i = 0; i < n; ++i) {
    grids[i].source_id = i;
    for (int j = 0; j < 4; ++j) {
      ViewTile tile;
      tile.scale = 1;
      tile.pixels = constant_image(8, static_cast<float>(i * 4 + j) / 16.0f);
      grids[i].tiles.push_back(tile);
    }
  }
  StitchedBatch batch = stitch_batch(grids, cfg);

  const int expected_sources[3][4] = {{0, 1, 2, 0}, {1, 2, 0, 1}, {2, 0, 1, 2}};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(batch.provenance[i][j].source == static_cast<std::size_t>(expected_sources[i][j]));
      CHECK(batch.provenance[i][j].slot == j);
      CHECK(batch.m2s_labels[i][j] == expected_sources[i][j]);
      // Pixel probe at the slot's top-left corner.
      const int y = (j / 2) * 8, x = (j % 2) * 8;
      const float expected = static_cast<float>(expected_sources[i][j] * 4 + j) / 16.0f;
      CHECK(batch.images[i].at(y, x, 0) == expected);
      CHECK(batch.images[i].at(y + 7, x + 7, 1) == expected);
    }
  }
}

TEST_CASE("stitch_batch of a single sample stitches its own tiles") {
  StitchConfig cfg{2, 1, 16};
  std::vector<ViewGrid> grids(1);
  for (int j = 0; j < 4; ++j) {
    ViewTile tile;
    tile.pixels = constant_image(8, 0.2f * static_cast<float>(j + 1));
    grids[0].tiles.push_back(tile);
  }
  StitchedBatch batch = stitch_batch(grids, cfg);
  for (int j = 0; j < 4; ++j) {
    CHECK(batch.provenance[0][j].source == 0);
    CHECK(batch.images[0].at((j / 2) * 8, (j % 2) * 8, 0) == 0.2f * static_cast<float>(j + 1));
  }
}

TEST_CASE("stitch_batch rejects mixed tile sizes") {
  StitchConfig cfg{2, 1, 16};
  std::vector<ViewGrid> grids(1);
  for (int j = 0; j < 4; ++j) {
    ViewTile tile;
    tile.pixels = constant_image(j == 3 ? 4 : 8, 0.5f);
    grids[0].tiles.push_back(tile);
  }
  CHECK_THROWS_AS(stitch_batch(grids, cfg), ShapeError);
}

TEST_CASE("stitched batch provenance agrees with the m2s labels") {
  Dataset ds = generate_synthetic(5, 3, 16, 9);
  StitchConfig cfg{2, 2, 16};
  AugmentationPolicy policy;
  std::vector<ViewGrid> grids;
  for (std::size_t i = 0; i < ds.size(); ++i)
    grids.push_back(build_view_grid(ds.images[i], cfg, policy, Rng(40).child(i), i));
  StitchedBatch batch = stitch_batch(grids, cfg);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(batch.provenance[i][j].source == static_cast<std::size_t>(batch.m2s_labels[i][j]));
}

TEST_CASE("stitch config validation") {
  CHECK_THROWS_AS((StitchConfig{3, 1, 16}.validate()), ConfigError);  // 16 % 3 != 0
  CHECK_THROWS_AS((StitchConfig{2, 2, 10}.validate()), ConfigError);  // 10 % 4 != 0
  CHECK_NOTHROW((StitchConfig{2, 2, 16}.validate()));
}
