#include "mos/stitching.hpp"

#include <algorithm>
#include <cmath>

namespace mos {

std::vector<Image> multi_view_augment(const Image &img, int grid_side, int scale,
                                      const AugmentationPolicy &policy, const Rng &rng) {
  if (grid_side < 1 || scale < 1) throw ConfigError("multi_view_augment: factors must be >= 1");
  if (img.height != img.width) throw ConfigError("multi_view_augment: image must be square");
  const int cells = grid_side * scale;
  if (img.height % cells != 0) throw ConfigError("multi_view_augment: image side not divisible by grid_side * scale");

  AugmentationPolicy view_policy = policy;
  view_policy.out_size = img.height / cells;

  const int count = cells * cells;
  std::vector<Image> views;
  views.reserve(count);
  for (int v = 0; v < count; ++v) views.push_back(apply_policy(img, view_policy, rng.child(v)));
  return views;
}

Image stitch_group(const std::vector<Image> &group, int scale) {
  if (scale < 1) throw ShapeError("stitch_group: scale must be >= 1");
  if (group.size() != static_cast<std::size_t>(scale) * scale)
    throw ShapeError("stitch_group: expected scale^2 views, got " + std::to_string(group.size()));
  const Image &first = group.front();
  if (first.height != first.width) throw ShapeError("stitch_group: views must be square");
  for (const Image &v : group)
    if (!v.same_dims(first)) throw ShapeError("stitch_group: mixed view sizes");

  const int side = first.height;
  Image out(side * scale, side * scale, first.channels);
  for (int k = 0; k < scale * scale; ++k) {
    const int cell_y = (k / scale) * side;
    const int cell_x = (k % scale) * side;
    const Image &v = group[k];
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        for (int c = 0; c < v.channels; ++c) out.at(cell_y + y, cell_x + x, c) = v.at(y, x, c);
  }
  return out;
}

ViewGrid build_view_grid(const Image &img, const StitchConfig &cfg, const AugmentationPolicy &policy,
                         const Rng &rng, std::size_t source_id) {
  cfg.validate();
  if (img.height != cfg.base_size || img.width != cfg.base_size)
    throw ConfigError("build_view_grid: image does not match configured base_size");

  ViewGrid grid;
  grid.source_id = source_id;
  grid.tiles.reserve(cfg.tiles_per_image());

  AugmentationPolicy view_policy = policy;
  for (int slot = 0; slot < cfg.tiles_per_image(); ++slot) {
    Rng tile_rng = rng.child(static_cast<std::uint64_t>(slot));
    const int scale = 1 + static_cast<int>(tile_rng.uniform_int(static_cast<std::uint64_t>(cfg.max_scale)));
    view_policy.out_size = cfg.base_size / (cfg.grid_side * scale);

    ViewTile tile;
    tile.scale = scale;
    std::vector<Image> sub_views;
    sub_views.reserve(static_cast<std::size_t>(scale) * scale);
    for (int k = 0; k < scale * scale; ++k) {
      AugRecord record;
      sub_views.push_back(apply_policy(img, view_policy, tile_rng.child(static_cast<std::uint64_t>(k + 1)), &record));
      tile.sub_views.push_back(SubViewRecord{record});
    }
    tile.pixels = stitch_group(sub_views, scale);
    grid.tiles.push_back(std::move(tile));
  }
  return grid;
}

StitchPermutation stitch_permutation(std::size_t batch, std::size_t tiles) {
  if (batch < 1 || tiles < 1) throw ConfigError("stitch_permutation: batch and tiles must be >= 1");
  StitchPermutation p;
  p.batch = batch;
  p.tiles = tiles;
  const std::size_t total = batch * tiles;
  p.t.resize(total);
  p.q.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    p.t[t] = t;
    p.q[t] = (t + (t % tiles) * tiles) % total;
  }
  return p;
}

std::vector<std::vector<int>> m2s_labels(std::size_t batch, std::size_t tiles) {
  if (batch < 1 || tiles < 1) throw ConfigError("m2s_labels: batch and tiles must be >= 1");
  std::vector<std::vector<int>> labels(batch, std::vector<int>(tiles));
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < tiles; ++j) labels[i][j] = static_cast<int>((i + j) % batch);
  return labels;
}

CorrespondenceTargets m2m_targets(std::size_t batch, std::size_t tiles) {
  if (tiles < 1) throw ConfigError("m2m_targets: tiles must be >= 1");
  if (batch < 2 * tiles - 1)
    throw ConfigError("m2m_targets: batch too small, need N >= 2M-1 (N=" + std::to_string(batch) +
                      ", M=" + std::to_string(tiles) + ")");

  const std::size_t width = 2 * tiles - 1;
  CorrespondenceTargets targets;
  targets.labels.assign(batch, std::vector<int>(width));
  targets.scores.assign(batch, std::vector<double>(width));
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t l = 0; l < width; ++l) {
      const std::size_t shifted = (i + batch + l + 1 - tiles) % batch;
      targets.labels[i][l] = static_cast<int>(shifted);
      // Overlap count is M - |M - 1 - l|; one division keeps the appendix
      // values (1/3, 2/3, 1, ...) reproducible bit-for-bit.
      const auto offset = static_cast<long long>(l);
      const auto m = static_cast<long long>(tiles);
      const long long overlap = m - std::llabs(m - 1 - offset);
      targets.scores[i][l] = static_cast<double>(overlap) / static_cast<double>(tiles);
    }
  }
  return targets;
}

std::size_t overlap_oracle(std::size_t i, std::size_t l, std::size_t batch, std::size_t tiles) {
  if (i >= batch || l >= batch) throw ConfigError("overlap_oracle: sample index out of range");
  std::vector<std::size_t> a, b;
  for (std::size_t j = 0; j < tiles; ++j) {
    a.push_back((i + j) % batch);
    b.push_back((l + j) % batch);
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return common.size();
}

StitchedBatch stitch_batch(const std::vector<ViewGrid> &grids, const StitchConfig &cfg) {
  cfg.validate();
  if (grids.empty()) throw ConfigError("stitch_batch: empty batch");
  const std::size_t batch = grids.size();
  const auto tiles = static_cast<std::size_t>(cfg.tiles_per_image());
  const int tile_side = cfg.tile_size();

  for (const ViewGrid &g : grids) {
    if (g.tiles.size() != tiles) throw ShapeError("stitch_batch: grid with wrong tile count");
    for (const ViewTile &tile : g.tiles)
      if (tile.pixels.height != tile_side || tile.pixels.width != tile_side)
        throw ShapeError("stitch_batch: mixed tile sizes");
  }

  StitchedBatch out;
  out.permutation = stitch_permutation(batch, tiles);
  out.m2s_labels = m2s_labels(batch, tiles);
  out.images.reserve(batch);
  out.provenance.assign(batch, {});

  // Gather through the flattened permutation: position i*M+j receives the
  // tile with flat index q[i*M+j] = ((i+j) mod N)*M + j.
  for (std::size_t i = 0; i < batch; ++i) {
    Image img(cfg.base_size, cfg.base_size, grids[0].tiles[0].pixels.channels);
    out.provenance[i].resize(tiles);
    for (std::size_t j = 0; j < tiles; ++j) {
      const std::size_t flat = out.permutation.q[i * tiles + j];
      const std::size_t src = flat / tiles;
      const auto slot = static_cast<int>(flat % tiles);
      const ViewTile &tile = grids[src].tiles[slot];

      const int cell_y = (static_cast<int>(j) / cfg.grid_side) * tile_side;
      const int cell_x = (static_cast<int>(j) % cfg.grid_side) * tile_side;
      for (int y = 0; y < tile_side; ++y)
        for (int x = 0; x < tile_side; ++x)
          for (int c = 0; c < tile.pixels.channels; ++c)
            img.at(cell_y + y, cell_x + x, c) = tile.pixels.at(y, x, c);

      out.provenance[i][j] = TileProvenance{grids[src].source_id, slot, tile.scale};
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

} // namespace mos
