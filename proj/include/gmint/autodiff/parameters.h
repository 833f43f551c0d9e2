#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gmint/autodiff/tensor.h"
#include "gmint/common/hashing.h"

namespace gmint::ad {

struct ParameterEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;

  bool operator==(const ParameterEntry&) const = default;
};

// Named parameter tensors in forward order. The order is what "first k" and
// "last k" layer selection refer to, and it survives save/load unchanged.
class ParameterSet {
 public:
  void add(std::string name, Tensor tensor, bool trainable = true);

  const std::vector<ParameterEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  const ParameterEntry* find(const std::string& name) const;
  ParameterEntry* find(const std::string& name);
  const Tensor& tensor(const std::string& name) const;
  Tensor& tensor(const std::string& name);

  std::vector<std::string> trainable_names() const;
  std::size_t parameter_count() const;

  // Serialises to the GMWT layout:
  //   "GMWT", version u32, entry count u64, then per entry
  //   name length u32 + UTF-8 name, trainable u8, rank u32, dims u64 each,
  //   row-major f64 payload. All integers and floats little-endian.
  void write(std::ostream& out) const;
  static ParameterSet read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static ParameterSet load(const std::filesystem::path& path);

  std::string serialize() const;
  // SHA-256 of the serialised bytes.
  Digest fingerprint() const;

  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<ParameterEntry> entries_;
};

inline constexpr std::uint32_t kParameterFileVersion = 1;

struct GradientEntry {
  std::string name;
  Tensor tensor;
};

// Gradients for every trainable entry of a ParameterSet, same order.
struct GradientMap {
  std::vector<GradientEntry> entries;
  double loss_value = 0.0;

  const Tensor* find(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
};

}  // namespace gmint::ad
