#include "mos/cifar10.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

namespace mos {

ChannelStats compute_channel_stats(const Dataset &ds) {
  if (ds.empty()) throw DataError("channel stats: empty dataset");
  const int channels = ds.images[0].channels;
  std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
  std::size_t per_channel = 0;
  for (const Image &img : ds.images) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const int c = static_cast<int>(i % channels);
      const double v = img.pixels[i];
      sum[c] += v;
      sum_sq[c] += v * v;
    }
    per_channel += img.pixels.size() / channels;
  }
  ChannelStats stats;
  stats.mean.resize(channels);
  stats.stddev.resize(channels);
  for (int c = 0; c < channels; ++c) {
    stats.mean[c] = sum[c] / static_cast<double>(per_channel);
    const double var = sum_sq[c] / static_cast<double>(per_channel) - stats.mean[c] * stats.mean[c];
    stats.stddev[c] = std::sqrt(var > 1e-12 ? var : 1e-12);
  }
  return stats;
}

Dataset load_cifar10(const std::string &path) {
  std::ifstream file(path, std::ios::binary | std::ios::ate);
  if (!file.is_open()) throw DataError("cifar10: cannot open file: " + path);

  const std::streamoff length = file.tellg();
  if (length <= 0 || static_cast<std::size_t>(length) % kCifarRecordBytes != 0) {
    throw DataError("cifar10: truncated record, file length " + std::to_string(length) +
                    " is not a positive multiple of " + std::to_string(kCifarRecordBytes));
  }
  file.seekg(0);

  const std::size_t records = static_cast<std::size_t>(length) / kCifarRecordBytes;
  Dataset ds;
  ds.class_count = kCifarClasses;
  ds.images.reserve(records);
  ds.labels.reserve(records);

  std::vector<unsigned char> record(kCifarRecordBytes);
  const int plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < records; ++r) {
    if (!file.read(reinterpret_cast<char *>(record.data()), static_cast<std::streamsize>(record.size()))) {
      throw DataError("cifar10: read failed at record " + std::to_string(r));
    }
    const int label = record[0];
    if (label >= kCifarClasses) {
      throw DataError("cifar10: corrupt label " + std::to_string(label) + " at record " + std::to_string(r));
    }
    Image img(kCifarSide, kCifarSide, kCifarChannels);
    for (int y = 0; y < kCifarSide; ++y) {
      for (int x = 0; x < kCifarSide; ++x) {
        for (int c = 0; c < kCifarChannels; ++c) {
          // Planes are stored R,G,B, each row-major.
          const unsigned char byte = record[1 + c * plane + y * kCifarSide + x];
          img.at(y, x, c) = static_cast<float>(byte) / 255.0f;
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

void save_cifar10(const Dataset &ds, const std::string &path) {
  ds.validate();
  for (const Image &img : ds.images) {
    if (img.height != kCifarSide || img.width != kCifarSide || img.channels != kCifarChannels) {
      throw ShapeError("cifar10: only 32x32x3 images can be exported");
    }
  }
  for (int label : ds.labels) {
    if (label >= kCifarClasses) throw DataError("cifar10: label does not fit the record format");
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file.is_open()) throw IoError("cifar10: cannot write file: " + path);

  const int plane = kCifarSide * kCifarSide;
  std::vector<unsigned char> record(kCifarRecordBytes);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    record[0] = static_cast<unsigned char>(ds.labels[r]);
    const Image &img = ds.images[r];
    for (int y = 0; y < kCifarSide; ++y) {
      for (int x = 0; x < kCifarSide; ++x) {
        for (int c = 0; c < kCifarChannels; ++c) {
          float v = img.at(y, x, c) * 255.0f;
          v = v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v);
          record[1 + c * plane + y * kCifarSide + x] = static_cast<unsigned char>(std::lround(v));
        }
      }
    }
    file.write(reinterpret_cast<const char *>(record.data()), static_cast<std::streamsize>(record.size()));
  }
  if (!file.good()) throw IoError("cifar10: write failed: " + path);
}

} // namespace mos
