#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gmint {

// Derives an independent 64-bit seed from the top-level seed and a named
// stream. The derivation hashes the string "<top>/seed:<component>:<index>"
// with SHA-256 and reads the first 8 bytes little-endian.
std::uint64_t derive_seed(std::uint64_t top_seed, std::string_view component,
                          std::uint64_t index = 0);

// Portable RNG: mt19937_64 is fully specified by the standard, the helpers
// below avoid the implementation-defined std:: distributions so that the
// same seed yields the same stream with any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace gmint
