#pragma once

#include <cstdint>
#include <random>

namespace camloc {

/// Seedable, splittable random source. Every random decision in the project
/// draws from an Rng seeded through derive_seed(), so per-sample draws are
/// order-independent and runs reproduce byte-identically. Doubles are built
/// from raw mt19937_64 output instead of std::uniform_real_distribution to
/// keep streams identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0,1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0,n). Rejection sampling keeps the draw unbiased.
  int uniform_int(int n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

  /// Standard normal via Marsaglia polar; second value cached.
  double normal();

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

namespace seed_tag {
// Purpose tags so distinct random decisions derived from the same
// (seed, sample, epoch) triple never share a stream.
inline constexpr std::uint64_t kInit = 0x696e6974;      // parameter init
inline constexpr std::uint64_t kShuffle = 0x73687566;   // epoch data order
inline constexpr std::uint64_t kMask = 0x6d61736b;      // hide masks
inline constexpr std::uint64_t kMixed = 0x6d697864;     // mixed patch-size draw
inline constexpr std::uint64_t kDropout = 0x64726f70;   // pixel dropout
inline constexpr std::uint64_t kSample = 0x73616d70;    // synthetic sample
inline constexpr std::uint64_t kEval = 0x6576616c;      // eval-time transforms
}  // namespace seed_tag

/// SplitMix64-style mixing of up to four words into one child seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace camloc
