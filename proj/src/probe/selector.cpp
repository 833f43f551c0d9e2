#include "gmint/probe/selector.h"

#include <algorithm>
#include <charconv>

#include "gmint/common/errors.h"

namespace gmint::probe {

LayerSelector LayerSelector::first(std::size_t k) {
  if (k == 0) throw ConfigError("layer selector k must be positive");
  return {Mode::first_k, k, {}};
}

LayerSelector LayerSelector::last(std::size_t k) {
  if (k == 0) throw ConfigError("layer selector k must be positive");
  return {Mode::last_k, k, {}};
}

LayerSelector LayerSelector::named_layers(std::vector<std::string> names) {
  if (names.empty()) throw ConfigError("named layer selector needs at least one name");
  return {Mode::named, 0, std::move(names)};
}

LayerSelector LayerSelector::parse(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("bad selector '" + text + "' (expected first:K, last:K or names:a,b)");
  std::string mode = text.substr(0, colon), rest = text.substr(colon + 1);
  if (mode == "names") {
    std::vector<std::string> names;
    std::size_t start = 0;
    while (start <= rest.size()) {
      auto comma = rest.find(',', start);
      if (comma == std::string::npos) comma = rest.size();
      std::string name = rest.substr(start, comma - start);
      if (name.empty()) throw ConfigError("empty layer name in selector '" + text + "'");
      names.push_back(name);
      start = comma + 1;
    }
    return named_layers(std::move(names));
  }
  std::size_t k = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || rest.empty())
    throw ConfigError("bad layer count in selector '" + text + "'");
  if (mode == "first") return first(k);
  if (mode == "last") return last(k);
  throw ConfigError("unknown selector mode '" + mode + "'");
}

std::string LayerSelector::to_string() const {
  switch (mode) {
    case Mode::first_k: return "first:" + std::to_string(k);
    case Mode::last_k: return "last:" + std::to_string(k);
    case Mode::named: {
      std::string out = "names:";
      for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
      return out;
    }
  }
  return {};
}

nlohmann::ordered_json LayerSelector::to_json() const {
  nlohmann::ordered_json j;
  switch (mode) {
    case Mode::first_k: j = {{"mode", "first_k"}, {"k", k}}; break;
    case Mode::last_k: j = {{"mode", "last_k"}, {"k", k}}; break;
    case Mode::named: j = {{"mode", "named"}, {"names", names}}; break;
  }
  return j;
}

std::vector<std::string> LayerSelector::resolve(const ad::ParameterSet& params) const {
  auto trainable = params.trainable_names();
  if (mode == Mode::named) {
    std::vector<std::string> out;
    for (const auto& name : trainable)
      if (std::find(names.begin(), names.end(), name) != names.end()) out.push_back(name);
    for (const auto& name : names)
      if (std::find(trainable.begin(), trainable.end(), name) == trainable.end())
        throw DataError("selected layer '" + name + "' is not a trainable parameter of the model");
    return out;
  }
  if (k == 0 || k > trainable.size())
    throw DataError("selector " + to_string() + " needs " + std::to_string(k) + " trainable tensors, model has " +
                    std::to_string(trainable.size()));
  if (mode == Mode::first_k) return {trainable.begin(), trainable.begin() + static_cast<long>(k)};
  return {trainable.end() - static_cast<long>(k), trainable.end()};
}

}  // namespace gmint::probe
