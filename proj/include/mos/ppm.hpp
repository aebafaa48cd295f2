#pragma once

#include <string>

#include "mos/image.hpp"

namespace mos {

/// Write a binary PPM (P6, maxval 255). Pixel floats are clamped to [0,1]
/// and rounded to bytes.
void write_ppm(const Image &img, const std::string &path);

/// Read a binary PPM written by write_ppm (P6, maxval 255 only).
Image read_ppm(const std::string &path);

} // namespace mos
