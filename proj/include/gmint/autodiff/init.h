#pragma once

#include <cstdint>
#include <string_view>

#include "gmint/autodiff/tensor.h"

namespace gmint::ad {

// Glorot/Xavier uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)), where
// fan_in and fan_out are the first and last axes. The stream is derived from
// (seed, stream_name) so adding a layer never perturbs the others.
Tensor glorot_uniform(const Shape& shape, std::uint64_t seed, std::string_view stream_name);

}  // namespace gmint::ad
