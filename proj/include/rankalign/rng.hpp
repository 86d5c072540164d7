#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rankalign {

// Deterministic RNG wrapper. All draws go through explicit integer math
// (no std distributions, whose output is implementation-defined), so equal
// seeds give equal streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a over a byte string, usable as a seed mixer.
std::uint64_t fnv1a64(std::string_view s,
                      std::uint64_t h = 1469598103934665603ull);

/// Derives an independent child seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace rankalign
