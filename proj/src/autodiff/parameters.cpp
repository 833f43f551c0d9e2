#include "gmint/autodiff/parameters.h"

#include <fstream>
#include <sstream>

#include "gmint/common/binary_io.h"
#include "gmint/common/errors.h"

namespace gmint::ad {

void ParameterSet::add(std::string name, Tensor tensor, bool trainable) {
  if (name.empty()) throw Error("parameter name must not be empty");
  if (contains(name)) throw Error("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor), trainable});
}

const ParameterEntry* ParameterSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

ParameterEntry* ParameterSet::find(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const Tensor& ParameterSet::tensor(const std::string& name) const {
  const auto* e = find(name);
  if (!e) throw Error("no parameter named '" + name + "'");
  return e->tensor;
}

Tensor& ParameterSet::tensor(const std::string& name) {
  auto* e = find(name);
  if (!e) throw Error("no parameter named '" + name + "'");
  return e->tensor;
}

std::vector<std::string> ParameterSet::trainable_names() const {
  std::vector<std::string> names;
  for (const auto& e : entries_)
    if (e.trainable) names.push_back(e.name);
  return names;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterSet::write(std::ostream& out) const {
  binio::write_bytes(out, "GMWT");
  binio::write<std::uint32_t>(out, kParameterFileVersion);
  binio::write<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    binio::write_bytes(out, e.name);
    binio::write<std::uint8_t>(out, e.trainable ? 1 : 0);
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) binio::write<std::uint64_t>(out, d);
    for (double v : e.tensor.data()) binio::write<double>(out, v);
  }
}

ParameterSet ParameterSet::read(std::istream& in) {
  if (binio::read_bytes(in, 4) != "GMWT") throw ParseError("not a GMWT parameter file", 0);
  auto version = binio::read<std::uint32_t>(in);
  if (version != kParameterFileVersion)
    throw ParseError("unsupported GMWT version " + std::to_string(version), 0);
  auto count = binio::read<std::uint64_t>(in);
  ParameterSet set;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name_len = binio::read<std::uint32_t>(in);
    std::string name = binio::read_bytes(in, name_len);
    bool trainable = binio::read<std::uint8_t>(in) != 0;
    auto rank = binio::read<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(binio::read<std::uint64_t>(in));
    std::vector<double> data(element_count(shape));
    for (auto& v : data) v = binio::read<double>(in);
    set.add(std::move(name), Tensor(std::move(shape), std::move(data)), trainable);
  }
  return set;
}

void ParameterSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write(out);
}

ParameterSet ParameterSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("cannot open parameter file " + path.string());
  return read(in);
}

std::string ParameterSet::serialize() const {
  std::ostringstream out(std::ios::binary);
  write(out);
  return std::move(out).str();
}

Digest ParameterSet::fingerprint() const { return sha256(serialize()); }

const Tensor* GradientMap::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e.tensor;
  return nullptr;
}

const Tensor& GradientMap::at(const std::string& name) const {
  const auto* t = find(name);
  if (!t) throw Error("no gradient for '" + name + "'");
  return *t;
}

}  // namespace gmint::ad
