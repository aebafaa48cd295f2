#include "mos/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "mos/rng.hpp"

namespace mos {

namespace {

void hsv_to_rgb(double h, double s, double v, float rgb[3]) {
  h = h - std::floor(h); // wrap to [0,1)
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  rgb[0] = static_cast<float>(r);
  rgb[1] = static_cast<float>(g);
  rgb[2] = static_cast<float>(b);
}

// Inside test in shape-local coordinates u, v in [-1, 1] (v grows downward).
bool inside_shape(int shape, double u, double v) {
  switch (shape) {
    case 0: // disc
      return u * u + v * v <= 1.0;
    case 1: // square
      return std::max(std::abs(u), std::abs(v)) <= 0.88;
    case 2: // triangle, apex up
      return v >= -0.9 && v <= 0.8 && std::abs(u) <= 0.95 * (v + 0.9) / 1.7;
    case 3: { // ring
      const double rr = u * u + v * v;
      return rr <= 1.0 && rr >= 0.3;
    }
    case 4: // plus cross
      return (std::abs(u) <= 0.32 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.32 && std::abs(u) <= 1.0);
    case 5: // diamond
      return std::abs(u) + std::abs(v) <= 1.05;
    case 6: // two horizontal bars
      return std::abs(u) <= 0.95 && (std::abs(v - 0.52) <= 0.22 || std::abs(v + 0.52) <= 0.22);
    default: // saltire (X)
      return std::abs(u) <= 1.0 && std::abs(v) <= 1.0 && (std::abs(u - v) <= 0.34 || std::abs(u + v) <= 0.34);
  }
}

} // namespace

Dataset generate_synthetic(std::size_t n, int classes, int size, std::uint64_t seed) {
  if (classes < 2 || classes > 8) throw ConfigError("synthetic: classes must be in 2..8");
  if (size < 16) throw ConfigError("synthetic: size must be >= 16");

  Dataset ds;
  ds.class_count = classes;
  ds.images.reserve(n);
  ds.labels.reserve(n);

  const Rng root(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.child(i);
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));

    // Background: flat gray plus low-amplitude noise.
    const double bg = rng.uniform(0.10, 0.35);
    // Shape placement and color; the palette is independent of the class.
    const double cx = 0.5 * size + rng.uniform(-0.10, 0.10) * size;
    const double cy = 0.5 * size + rng.uniform(-0.10, 0.10) * size;
    const double radius = rng.uniform(0.27, 0.40) * size;
    float color[3];
    hsv_to_rgb(rng.uniform(), rng.uniform(0.55, 1.0), rng.uniform(0.70, 1.0), color);

    Image img(size, size, 3);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double u = (x + 0.5 - cx) / radius;
        const double v = (y + 0.5 - cy) / radius;
        const bool hit = inside_shape(label, u, v);
        for (int c = 0; c < 3; ++c) {
          const float noise = static_cast<float>(rng.uniform(-0.04, 0.04));
          const float base = hit ? color[c] : static_cast<float>(bg);
          img.at(y, x, c) = std::clamp(base + noise, 0.0f, 1.0f);
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

} // namespace mos
