#include "mos/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mos {

namespace {

bool prob_ok(double p) { return p >= 0.0 && p <= 1.0; }

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void rgb_to_hsv(float r, float g, float b, float &h, float &s, float &v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0f ? d / mx : 0.0f;
  if (d <= 0.0f) {
    h = 0.0f;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
    if (h < 0.0f) h += 6.0f;
  } else if (mx == g) {
    h = (b - r) / d + 2.0f;
  } else {
    h = (r - g) / d + 4.0f;
  }
  h /= 6.0f;
}

void hsv_to_rgb(float h, float s, float v, float &r, float &g, float &b) {
  h = h - std::floor(h);
  const float h6 = h * 6.0f;
  const int sector = static_cast<int>(h6) % 6;
  const float f = h6 - std::floor(h6);
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - s * f);
  const float t = v * (1.0f - s * (1.0f - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

void clamp01(Image &img) {
  for (float &v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

void adjust_brightness(Image &img, float factor) {
  for (float &v : img.pixels) v *= factor;
  clamp01(img);
}

void adjust_contrast(Image &img, float factor) {
  double sum = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) sum += luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
  const float mean = static_cast<float>(sum / (static_cast<double>(img.height) * img.width));
  for (float &v : img.pixels) v = (v - mean) * factor + mean;
  clamp01(img);
}

void adjust_saturation(Image &img, float factor) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float l = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = (img.at(y, x, c) - l) * factor + l;
    }
  }
  clamp01(img);
}

void adjust_hue(Image &img, float delta) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float h, s, v;
      rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
      hsv_to_rgb(h + delta, s, v, img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
    }
  }
}

void to_grayscale(Image &img) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float l = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = l;
    }
  }
}

void gaussian_blur(Image &img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[i + radius] = static_cast<float>(w);
    norm += w;
  }
  for (float &w : kernel) w = static_cast<float>(w / norm);

  Image tmp = img;
  // Horizontal pass with replicated borders.
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = std::clamp(x + k, 0, img.width - 1);
          acc += kernel[k + radius] * img.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  // Vertical pass.
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = std::clamp(y + k, 0, img.height - 1);
          acc += kernel[k + radius] * tmp.at(yy, x, c);
        }
        img.at(y, x, c) = acc;
      }
    }
  }
}

void solarize(Image &img, float threshold) {
  for (float &v : img.pixels)
    if (v >= threshold) v = 1.0f - v;
}

void hflip(Image &img) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width / 2; ++x) {
      for (int c = 0; c < img.channels; ++c) std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
    }
  }
}

} // namespace

void AugmentationPolicy::validate() const {
  if (!(crop_area_lo > 0.0 && crop_area_lo <= crop_area_hi && crop_area_hi <= 1.0))
    throw ConfigError("augment: crop area range must satisfy 0 < lo <= hi <= 1");
  if (!(crop_aspect_lo > 0.0 && crop_aspect_lo <= crop_aspect_hi))
    throw ConfigError("augment: bad crop aspect range");
  if (out_size < 1) throw ConfigError("augment: out_size must be >= 1");
  for (double p : {jitter_prob, grayscale_prob, blur_prob, solarize_prob, hflip_prob})
    if (!prob_ok(p)) throw ConfigError("augment: probabilities must lie in [0,1]");
  if (!(blur_sigma_lo > 0.0 && blur_sigma_lo <= blur_sigma_hi)) throw ConfigError("augment: bad blur sigma range");
  if (!(solarize_threshold >= 0.0 && solarize_threshold <= 1.0))
    throw ConfigError("augment: solarize threshold must lie in [0,1]");
  for (double s : normalize_std)
    if (!(s > 0.0)) throw ConfigError("augment: normalize std must be positive");
}

AugmentationPolicy AugmentationPolicy::identity(int out_size) {
  AugmentationPolicy p;
  p.crop_area_lo = p.crop_area_hi = 1.0;
  p.crop_aspect_lo = p.crop_aspect_hi = 1.0;
  p.out_size = out_size;
  p.jitter_prob = p.grayscale_prob = p.blur_prob = p.solarize_prob = p.hflip_prob = 0.0;
  return p;
}

std::array<AugmentationPolicy, 4> default_policies(int out_size) {
  std::array<AugmentationPolicy, 4> t;
  for (int i = 0; i < 4; ++i) {
    t[i].out_size = out_size;
    t[i].crop_area_lo = i < 2 ? 0.2 : 0.1;
    t[i].crop_area_hi = 1.0;
    t[i].blur_prob = (i == 1 || i == 3) ? 1.0 : 0.1;
    t[i].solarize_prob = (i == 1 || i == 3) ? 0.2 : 0.0;
  }
  return t;
}

Image resize_bilinear(const Image &img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize: output dimensions must be positive");
  if (out_h == img.height && out_w == img.width) return img;

  Image out(out_h, out_w, img.channels);
  const double scale_y = static_cast<double>(img.height) / out_h;
  const double scale_x = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double sy = (y + 0.5) * scale_y - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float fy = static_cast<float>(sy - y0);
    for (int x = 0; x < out_w; ++x) {
      double sx = (x + 0.5) * scale_x - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float fx = static_cast<float>(sx - x0);
      for (int c = 0; c < img.channels; ++c) {
        const float top = (1.0f - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
        const float bot = (1.0f - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
        out.at(y, x, c) = (1.0f - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Image crop(const Image &img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > img.width || y + h > img.height)
    throw ShapeError("crop: rectangle outside image bounds");
  Image out(h, w, img.channels);
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < img.channels; ++c) out.at(yy, xx, c) = img.at(y + yy, x + xx, c);
  return out;
}

Image apply_policy(const Image &img, const AugmentationPolicy &policy, Rng rng, AugRecord *record) {
  policy.validate();
  if (img.height < 1 || img.width < 1) throw ShapeError("apply_policy: empty image");

  // Random resized crop: rejection-sample (area, aspect) up to 10 tries,
  // then fall back to the largest centered square.
  const double full_area = static_cast<double>(img.height) * img.width;
  int cx = 0, cy = 0, cw = 0, ch = 0;
  for (int attempt = 0; attempt < 10 && cw == 0; ++attempt) {
    const double target_area = full_area * rng.uniform(policy.crop_area_lo, policy.crop_area_hi);
    const double aspect = std::exp(rng.uniform(std::log(policy.crop_aspect_lo), std::log(policy.crop_aspect_hi)));
    const int w = static_cast<int>(std::lround(std::sqrt(target_area * aspect)));
    const int h = static_cast<int>(std::lround(std::sqrt(target_area / aspect)));
    if (w >= 1 && h >= 1 && w <= img.width && h <= img.height) {
      cx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.width - w + 1)));
      cy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.height - h + 1)));
      cw = w;
      ch = h;
    }
  }
  if (cw == 0) {
    const int side = std::min(img.height, img.width);
    cx = (img.width - side) / 2;
    cy = (img.height - side) / 2;
    cw = ch = side;
  }

  Image out = resize_bilinear(crop(img, cx, cy, cw, ch), policy.out_size, policy.out_size);

  if (rng.bernoulli(policy.jitter_prob)) {
    if (policy.brightness > 0.0)
      adjust_brightness(out, static_cast<float>(rng.uniform(std::max(0.0, 1.0 - policy.brightness), 1.0 + policy.brightness)));
    if (policy.contrast > 0.0)
      adjust_contrast(out, static_cast<float>(rng.uniform(std::max(0.0, 1.0 - policy.contrast), 1.0 + policy.contrast)));
    if (policy.saturation > 0.0)
      adjust_saturation(out, static_cast<float>(rng.uniform(std::max(0.0, 1.0 - policy.saturation), 1.0 + policy.saturation)));
    if (policy.hue > 0.0) adjust_hue(out, static_cast<float>(rng.uniform(-policy.hue, policy.hue)));
  }
  if (rng.bernoulli(policy.grayscale_prob)) to_grayscale(out);
  if (rng.bernoulli(policy.blur_prob)) gaussian_blur(out, rng.uniform(policy.blur_sigma_lo, policy.blur_sigma_hi));
  if (rng.bernoulli(policy.solarize_prob)) solarize(out, static_cast<float>(policy.solarize_threshold));
  const bool flipped = rng.bernoulli(policy.hflip_prob);
  if (flipped) hflip(out);

  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < out.channels; ++c)
        out.at(y, x, c) = static_cast<float>((out.at(y, x, c) - policy.normalize_mean[c]) / policy.normalize_std[c]);

  if (record) {
    record->x = cx;
    record->y = cy;
    record->w = cw;
    record->h = ch;
    record->flipped = flipped;
  }
  return out;
}

} // namespace mos
