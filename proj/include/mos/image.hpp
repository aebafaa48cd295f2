#pragma once

#include <cstddef>
#include <vector>

#include "mos/errors.hpp"

namespace mos {

/**
 * Dense float image, channel-interleaved row-major (HWC). Pixel values live
 * in [0,1] until normalization, which may shift them outside that range.
 */
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0.0f) {}

  float &at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  std::size_t size() const { return pixels.size(); }
  bool same_dims(const Image &o) const { return height == o.height && width == o.width && channels == o.channels; }
};

/// Labeled image collection; all images share dimensions.
struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  void validate() const {
    if (images.size() != labels.size()) throw DataError("dataset: images and labels length mismatch");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= class_count) throw DataError("dataset: label out of range");
      if (!images[i].same_dims(images[0])) throw DataError("dataset: mixed image dimensions");
    }
  }
};

/// Per-channel mean and standard deviation over a dataset, used as the
/// default normalization constants.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats compute_channel_stats(const Dataset &ds);

} // namespace mos
