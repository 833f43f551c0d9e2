#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gmint/autodiff/parameters.h"

namespace gmint::ad {

struct AdamHyperparams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  Tensor first;
  Tensor second;
};

struct AdamState {
  AdamHyperparams hyper;
  std::uint64_t step_count = 0;
  // Keyed by parameter name; created as zeros on first use.
  std::map<std::string, AdamMoments> moments;
};

// One bias-corrected Adam update of every trainable parameter:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,  t <- t + 1
//   w <- w - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// All gradients are validated before anything is modified, so a throw leaves
// params and state untouched.
void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state);

}  // namespace gmint::ad
