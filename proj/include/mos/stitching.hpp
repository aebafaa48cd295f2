#pragma once

#include <cstdint>
#include <vector>

#include "mos/augment.hpp"
#include "mos/image.hpp"
#include "mos/rng.hpp"

namespace mos {

/**
 * Geometry of multi-object stitching: a base_size x base_size image is an
 * r x r grid of tiles (grid_side = r, so tiles_per_image = r^2), and each
 * tile may itself be an s x s mosaic of smaller crops for a per-tile scale
 * s in {1..max_scale}. base_size must be divisible by grid_side * s for
 * every admissible s.
 */
struct StitchConfig {
  int grid_side = 2;  // r
  int max_scale = 1;  // S
  int base_size = 32; // H (= W)

  int tiles_per_image() const { return grid_side * grid_side; }
  int tile_size() const { return base_size / grid_side; }

  void validate() const {
    if (grid_side < 1) throw ConfigError("stitch: grid_side must be >= 1");
    if (max_scale < 1) throw ConfigError("stitch: max_scale must be >= 1");
    for (int s = 1; s <= max_scale; ++s) {
      if (base_size % (grid_side * s) != 0)
        throw ConfigError("stitch: base_size must be divisible by grid_side * s for every scale s");
    }
  }
};

/// One augmented crop inside a tile: where it came from in the source image.
struct SubViewRecord {
  AugRecord crop;
};

/// One tile of a sample's view grid: the stitched pixels, the chosen scale,
/// and the records of its scale^2 constituent crops.
struct ViewTile {
  Image pixels;
  int scale = 1;
  std::vector<SubViewRecord> sub_views;
};

/// All r^2 tiles generated from one source sample.
struct ViewGrid {
  std::size_t source_id = 0;
  std::vector<ViewTile> tiles;
};

/**
 * The cyclic stitching permutation on flattened tile indices
 * t = sample * M + slot: q_t = (t + (t mod M) * M) mod (N * M).
 * Reading q in blocks of M reproduces the per-slot source index
 * u(i, j) = (i + j) mod N.
 */
struct StitchPermutation {
  std::size_t batch = 0;       // N
  std::size_t tiles = 0;       // M
  std::vector<std::size_t> t;  // identity layout 0..N*M-1
  std::vector<std::size_t> q;  // gather indices

  std::size_t total() const { return batch * tiles; }
};

/// Provenance of one placed tile in a stitched image.
struct TileProvenance {
  std::size_t source = 0; // sample index in the input batch
  int slot = 0;           // grid slot (row-major)
  int scale = 1;
};

/// A batch of synthesized multi-object images with their m2s labels.
struct StitchedBatch {
  std::vector<Image> images;
  std::vector<std::vector<int>> m2s_labels;               // N x M
  StitchPermutation permutation;
  std::vector<std::vector<TileProvenance>> provenance;    // N x M
};

/// Labels and overlap scores for multi-to-multi contrast: N x (2M-1) each.
struct CorrespondenceTargets {
  std::vector<std::vector<int>> labels;
  std::vector<std::vector<double>> scores;
};

/**
 * Augment one image into (s * r)^2 independent square views of side
 * base/(s*r), the raw material for one scale level. Policy out_size is
 * overridden by the view side.
 */
std::vector<Image> multi_view_augment(const Image &img, int grid_side, int scale,
                                      const AugmentationPolicy &policy, const Rng &rng);

/// Stitch s^2 equal square views into one view of side s * view_side,
/// row-major placement, pixel-exact copies.
Image stitch_group(const std::vector<Image> &group, int scale);

/**
 * Build one sample's r^2 tiles: per tile slot a scale s is drawn uniformly
 * from {1..max_scale}, then s^2 fresh crops are augmented and stitched into
 * the tile. Randomness derives from `rng` via child(slot) and child(slot,
 * sub-view), so grids are reproducible under any parallel schedule.
 */
ViewGrid build_view_grid(const Image &img, const StitchConfig &cfg, const AugmentationPolicy &policy,
                         const Rng &rng, std::size_t source_id = 0);

/// The cyclic permutation for batch size N and M tiles per image.
StitchPermutation stitch_permutation(std::size_t batch, std::size_t tiles);

/// Labels of the stitched batch against single-object samples:
/// row i = ((i + j) mod N for j in 0..M-1).
std::vector<std::vector<int>> m2s_labels(std::size_t batch, std::size_t tiles);

/**
 * Multi-to-multi labels and overlap scores. Row i of the labels runs
 * cyclically from (i - M + 1) mod N to (i + M - 1) mod N; the score at
 * offset l is (M - |M - 1 - l|) / M. Requires N >= 2M - 1 so the 2M - 1
 * labels are distinct.
 */
CorrespondenceTargets m2m_targets(std::size_t batch, std::size_t tiles);

/// Independent oracle for the overlap scores: the number of common source
/// samples between stitched image i and stitched image l, by explicit set
/// intersection of their cyclic index windows.
std::size_t overlap_oracle(std::size_t i, std::size_t l, std::size_t batch, std::size_t tiles);

/// Assemble N view grids into N multi-object images via the cyclic
/// permutation; fills m2s labels and per-tile provenance.
StitchedBatch stitch_batch(const std::vector<ViewGrid> &grids, const StitchConfig &cfg);

} // namespace mos
