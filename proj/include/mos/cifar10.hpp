#pragma once

#include <string>

#include "mos/image.hpp"

namespace mos {

// CIFAR-10 binary format: 3073-byte records, byte 0 = label in 0..9,
// bytes 1..3072 = R,G,B planes of a 32x32 image, each plane row-major.

constexpr int kCifarSide = 32;
constexpr int kCifarChannels = 3;
constexpr int kCifarClasses = 10;
constexpr std::size_t kCifarRecordBytes = 1 + static_cast<std::size_t>(kCifarSide) * kCifarSide * kCifarChannels;

/**
 * Parse a CIFAR-10 binary file. Pixel bytes are scaled to [0,1]; record order
 * is preserved. Throws DataError on a missing file, a length that is not a
 * positive multiple of the record size, or a label byte >= 10.
 */
Dataset load_cifar10(const std::string &path);

/// Serialize a dataset (32x32x3, labels < 10) back into the same record
/// format. Pixel floats are mapped to bytes with round-to-nearest, so a
/// loaded file re-serializes byte-exactly.
void save_cifar10(const Dataset &ds, const std::string &path);

} // namespace mos
