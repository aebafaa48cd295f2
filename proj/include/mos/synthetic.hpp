#pragma once

#include <cstdint>

#include "mos/image.hpp"

namespace mos {

/**
 * Generate n single-object images, each one colored geometric shape on a
 * low-amplitude noise background. The class id selects the shape family
 * (disc, square, triangle, ring, cross, diamond, bars, saltire); colors are
 * drawn from a palette shared across classes so class identity is carried by
 * geometry. Labels are assigned round-robin and the whole dataset is a pure
 * function of (n, classes, size, seed).
 *
 * classes must be in 2..8 and size >= 16. n = 0 yields an empty dataset.
 */
Dataset generate_synthetic(std::size_t n, int classes, int size, std::uint64_t seed);

} // namespace mos
