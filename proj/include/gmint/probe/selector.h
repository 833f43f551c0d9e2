#pragma once

#include <string>
#include <vector>

#include "gmint/autodiff/parameters.h"
#include "json.hpp"

namespace gmint::probe {

// Chooses which trainable parameter tensors contribute to a gradient feature.
// k counts tensors of the ParameterSet in layer order, so "first:2" on the
// mlp is the embedding table plus the hidden weight.
struct LayerSelector {
  enum class Mode { first_k, last_k, named };

  Mode mode = Mode::first_k;
  std::size_t k = 2;
  std::vector<std::string> names;

  static LayerSelector first(std::size_t k);
  static LayerSelector last(std::size_t k);
  static LayerSelector named_layers(std::vector<std::string> names);

  // "first:K", "last:K" or "names:a,b,c"; throws ConfigError.
  static LayerSelector parse(const std::string& text);
  std::string to_string() const;
  nlohmann::ordered_json to_json() const;

  // Selected names in parameter order. Throws DataError when a named layer
  // is missing or frozen, or when k exceeds the number of trainable tensors.
  std::vector<std::string> resolve(const ad::ParameterSet& params) const;

  bool operator==(const LayerSelector&) const = default;
};

}  // namespace gmint::probe
