#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gmint::cli {

struct ArtifactEntry {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::string config_hash;
  std::string stage_hash;

  bool operator==(const ArtifactEntry&) const = default;
};

// index.json in the output directory: artifact role -> file, content hash
// and the hashes of the configuration that produced it.
class ArtifactIndex {
 public:
  explicit ArtifactIndex(std::filesystem::path root);

  // Reads index.json if present.
  static ArtifactIndex open(const std::filesystem::path& root);
  void save() const;

  const std::filesystem::path& root() const { return root_; }
  const std::map<std::string, ArtifactEntry>& entries() const { return entries_; }
  bool contains(const std::string& role) const { return entries_.count(role) > 0; }

  // Hashes the file now on disk and records it under `role`.
  void record(const std::string& role, const std::filesystem::path& relative, const std::string& config_hash,
              const std::string& stage_hash);
  void erase(const std::string& role) { entries_.erase(role); }

  // Absolute path of a valid artifact. Throws DependencyError naming the role
  // and expected hash when the entry is missing, the file is missing or
  // modified, or it was built from a different stage configuration.
  std::filesystem::path require(const std::string& role, const std::string& stage_hash) const;
  // True when `role` exists, matches its content hash and `stage_hash`.
  bool valid(const std::string& role, const std::string& stage_hash) const;

  // One message per listed artifact that is missing or modified.
  std::vector<std::string> verify() const;

 private:
  std::filesystem::path root_;
  std::map<std::string, ArtifactEntry> entries_;
};

std::string file_sha256(const std::filesystem::path& path);

// Exclusive advisory lock on <dir>/.gmint.lock, released on destruction or
// process exit. Throws ConfigError when another process holds it.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace gmint::cli
