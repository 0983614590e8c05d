#pragma once

#include <cmath>
#include <cstdint>

namespace momentfield {

namespace detail {

/// SplitMix64 finalizer (Stafford mix13). Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

}  // namespace detail

/// One independent random stream, derived deterministically from
/// (master_seed, stream_index). Ensembles address one stream per sample,
/// so results do not depend on how samples are distributed over threads.
///
/// Generator: xoshiro256** with SplitMix64 state expansion; normal
/// variates by Box-Muller. Every normal pair consumes exactly two
/// 64-bit words, so stream consumption is a fixed function of the
/// request sequence.
class RngStream {
public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index) {
    std::uint64_t s = master_seed ^ detail::mix64(stream_index + detail::kGolden);
    bool any = false;
    for (auto& w : state_) {
      s += detail::kGolden;
      w = detail::mix64(s);
      any = any || (w != 0);
    }
    if (!any) state_[0] = detail::kGolden;  // all-zero state is invalid
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on (0,1]. The +1 shifts the 53-bit mantissa off zero so the
  /// Box-Muller logarithm is always finite.
  double next_open_unit() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform on [0,1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal variate.
  double next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = next_open_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

private:
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace momentfield
