#include "gmint/autodiff/init.h"

#include <cmath>
#include <string>

#include "gmint/common/random.h"

namespace gmint::ad {

Tensor glorot_uniform(const Shape& shape, std::uint64_t seed, std::string_view stream_name) {
  Tensor t(shape);
  const double fan_in = static_cast<double>(shape.front());
  const double fan_out = static_cast<double>(shape.back());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(derive_seed(seed, std::string("init:") + std::string(stream_name)));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace gmint::ad
