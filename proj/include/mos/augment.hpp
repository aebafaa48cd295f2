#pragma once

#include <array>

#include "mos/image.hpp"
#include "mos/rng.hpp"

namespace mos {

/**
 * Parameters of one stochastic augmentation policy: random resized crop,
 * color jitter, grayscale, Gaussian blur, solarization, horizontal flip,
 * applied in that order, followed by per-channel normalization.
 */
struct AugmentationPolicy {
  double crop_area_lo = 0.2, crop_area_hi = 1.0;
  double crop_aspect_lo = 3.0 / 4.0, crop_aspect_hi = 4.0 / 3.0;
  int out_size = 32;

  double jitter_prob = 0.8;
  double brightness = 0.4, contrast = 0.4, saturation = 0.2, hue = 0.1;
  double grayscale_prob = 0.2;
  double blur_prob = 0.1;
  double blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;
  double solarize_prob = 0.0;
  double solarize_threshold = 0.5;
  double hflip_prob = 0.5;

  std::array<double, 3> normalize_mean{0.0, 0.0, 0.0};
  std::array<double, 3> normalize_std{1.0, 1.0, 1.0};

  void validate() const;

  /// Policy with every stochastic op disabled and identity crop/normalize:
  /// apply_policy degenerates to a resize to out_size.
  static AugmentationPolicy identity(int out_size);
};

/// The four pretraining policies. Index 0,1 feed the stitched views (crop
/// area [0.2,1.0]); index 2,3 feed the single-object views ([0.1,1.0]).
/// Blur probability is (0.1, 1.0, 0.1, 1.0) and solarization (0, 0.2, 0, 0.2)
/// across the four.
std::array<AugmentationPolicy, 4> default_policies(int out_size);

/// Crop rectangle in source-image pixels plus the flip decision; recorded so
/// stitched tiles stay traceable to their source regions.
struct AugRecord {
  int x = 0, y = 0, w = 0, h = 0;
  bool flipped = false;
};

/// Bilinear resize (half-pixel-center sampling grid). A constant image stays
/// constant and equal sizes are an exact identity.
Image resize_bilinear(const Image &img, int out_h, int out_w);

/// Axis-aligned crop; the rectangle must lie inside the image.
Image crop(const Image &img, int x, int y, int w, int h);

/**
 * Apply the full policy to one image. Pure: the Rng is taken by value, so a
 * given (image, policy, rng state) always produces the same output. Crop
 * sampling retries up to 10 times and falls back to a full-image center
 * crop, never failing. If `record` is non-null the chosen crop rectangle and
 * flip decision are written to it.
 */
Image apply_policy(const Image &img, const AugmentationPolicy &policy, Rng rng, AugRecord *record = nullptr);

} // namespace mos
