#ifndef PISHGUVE_RNG_HPP
#define PISHGUVE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace pv {

/// Counter-free SplitMix64 stream. A (seed, stream_id) pair fully determines
/// the sequence; the same pair yields bit-identical output on every platform.
///
/// State derivation: both inputs are run through one SplitMix64 finalizer each
/// and xored, so streams with nearby ids are decorrelated.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id),
        state_(finalize(seed + 0x9E3779B97F4A7C15ull) ^
               finalize(stream_id + 0xBF58476D1CE4E5B9ull)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Derive an independent stream for a sub-component (vehicle, scene, ...).
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, finalize(stream_id_ + 0x94D049BB133111EBull * (id + 1)));
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; two uniforms per call, no caching, so the
  /// draw count per call is fixed.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_;
};

}  // namespace pv

#endif
