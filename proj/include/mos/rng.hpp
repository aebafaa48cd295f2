#pragma once

#include <cmath>
#include <cstdint>

namespace mos {

/**
 * Deterministic counter-style random stream.
 *
 * A stream is identified by a 64-bit key. Derived streams are obtained with
 * child(tag); the canonical derivation path for data-pipeline randomness is
 *
 *   Rng(master_seed).child(epoch).child(sample_index).child(slot)
 *
 * so the draw sequence for any (seed, path) is independent of thread count,
 * batch composition and call order. All draws go through our own integer and
 * floating-point conversions (never std::*_distribution) so sequences are
 * identical across platforms and standard libraries.
 */
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(mix(0x9e3779b97f4a7c15ull ^ seed)) {}

  /// New independent stream keyed by this stream and `tag`.
  Rng child(std::uint64_t tag) const { return Rng(FromState{}, mix(state_ + 0xbf58476d1ce4e5b9ull * (tag + 1))); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Multiply-shift rejection-free mapping; bias is negligible for n << 2^64.
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Bernoulli draw with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (the spare value is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Normal(0, std) truncated to [-2 std, 2 std], the usual ViT weight init.
  double truncated_normal(double std_dev) {
    for (;;) {
      const double x = normal();
      if (x >= -2.0 && x <= 2.0) return x * std_dev;
    }
  }

private:
  struct FromState {};
  Rng(FromState, std::uint64_t s) : state_(s) {}

  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fixed tags for the top-level derivation paths used by the trainer and data
// pipeline. Kept in one place so replay from a checkpoint rebuilds the exact
// streams.
namespace rng_tag {
constexpr std::uint64_t kInit = 0x1111;       // parameter initialization
constexpr std::uint64_t kShuffle = 0x2222;    // per-epoch dataset shuffle
constexpr std::uint64_t kGridFactor = 0x3333; // per-batch grid-side draw
constexpr std::uint64_t kDropPath = 0x4444;   // stochastic residual drop
constexpr std::uint64_t kView1 = 1;
constexpr std::uint64_t kView2 = 2;
constexpr std::uint64_t kView3 = 3;
constexpr std::uint64_t kView4 = 4;
} // namespace rng_tag

} // namespace mos
