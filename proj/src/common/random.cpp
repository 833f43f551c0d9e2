#include "gmint/common/random.h"

#include <cmath>
#include <string>
#include <unordered_map>

#include "gmint/common/hashing.h"

namespace gmint {

std::uint64_t derive_seed(std::uint64_t top_seed, std::string_view component,
                          std::uint64_t index) {
  std::string key = std::to_string(top_seed) + "/seed:" + std::string(component) +
                    ":" + std::to_string(index);
  Digest d = sha256(key);
  std::uint64_t seed = 0;
  for (int i = 7; i >= 0; --i) seed = (seed << 8) | d[static_cast<std::size_t>(i)];
  return seed;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // Box-Muller; u1 is kept away from zero.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  // Partial Fisher-Yates over a sparse swap table.
  std::unordered_map<std::size_t, std::size_t> swapped;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(below(n - i));
    auto at = [&](std::size_t idx) {
      auto it = swapped.find(idx);
      return it == swapped.end() ? idx : it->second;
    };
    std::size_t vj = at(j);
    std::size_t vi = at(i);
    swapped[j] = vi;
    out.push_back(vj);
  }
  return out;
}

}  // namespace gmint
