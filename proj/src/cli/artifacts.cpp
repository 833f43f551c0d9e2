#include "gmint/cli/artifacts.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>

#include "gmint/common/errors.h"
#include "gmint/common/hashing.h"
#include "json.hpp"

namespace gmint::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kIndexFile = "index.json";

}  // namespace

std::string file_sha256(const fs::path& path) { return to_hex(sha256_file(path)); }

ArtifactIndex::ArtifactIndex(fs::path root) : root_(std::move(root)) {}

ArtifactIndex ArtifactIndex::open(const fs::path& root) {
  ArtifactIndex index(root);
  auto path = root / kIndexFile;
  if (!fs::exists(path)) return index;
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
    for (const auto& [role, e] : j.at("artifacts").items())
      index.entries_[role] = {e.at("path").get<std::string>(), e.at("sha256").get<std::string>(),
                              e.at("config_hash").get<std::string>(), e.at("stage_hash").get<std::string>()};
  } catch (const json::exception& e) {
    throw ParseError("artifact index " + path.string() + " is corrupt: " + e.what(), 0);
  }
  return index;
}

void ArtifactIndex::save() const {
  ordered_json artifacts = ordered_json::object();
  for (const auto& [role, e] : entries_)
    artifacts[role] = {{"path", e.path}, {"sha256", e.sha256}, {"config_hash", e.config_hash}, {"stage_hash", e.stage_hash}};
  fs::create_directories(root_);
  auto tmp = root_ / (std::string(kIndexFile) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << ordered_json{{"schema_version", 1}, {"artifacts", artifacts}}.dump(1) << '\n';
  }
  fs::rename(tmp, root_ / kIndexFile);
}

void ArtifactIndex::record(const std::string& role, const fs::path& relative, const std::string& config_hash,
                           const std::string& stage_hash) {
  entries_[role] = {relative.generic_string(), file_sha256(root_ / relative), config_hash, stage_hash};
}

fs::path ArtifactIndex::require(const std::string& role, const std::string& stage_hash) const {
  auto it = entries_.find(role);
  if (it == entries_.end())
    throw DependencyError("missing artifact '" + role + "' (expected stage hash " + stage_hash + ")");
  const auto& e = it->second;
  auto path = root_ / e.path;
  if (!fs::exists(path))
    throw DependencyError("artifact '" + role + "' is missing at " + e.path + " (expected sha256 " + e.sha256 + ")");
  auto actual = file_sha256(path);
  if (actual != e.sha256)
    throw DependencyError("artifact '" + role + "' at " + e.path + " fails its hash check: expected sha256 " +
                          e.sha256 + ", found " + actual);
  if (e.stage_hash != stage_hash)
    throw DependencyError("artifact '" + role + "' is stale: built for stage hash " + e.stage_hash +
                          ", current configuration expects " + stage_hash);
  return path;
}

bool ArtifactIndex::valid(const std::string& role, const std::string& stage_hash) const {
  try {
    require(role, stage_hash);
    return true;
  } catch (const DependencyError&) {
    return false;
  }
}

std::vector<std::string> ArtifactIndex::verify() const {
  std::vector<std::string> problems;
  for (const auto& [role, e] : entries_) {
    auto path = root_ / e.path;
    if (!fs::exists(path)) {
      problems.push_back(role + ": missing " + e.path);
      continue;
    }
    auto actual = file_sha256(path);
    if (actual != e.sha256) problems.push_back(role + ": hash mismatch for " + e.path + " (expected " + e.sha256 + ", found " + actual + ")");
  }
  return problems;
}

OutputLock::OutputLock(const fs::path& dir) {
  fs::create_directories(dir);
  auto path = dir / ".gmint.lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw ConfigError("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ConfigError("output directory " + dir.string() + " is in use by another gmint process");
  }
}

OutputLock::~OutputLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace gmint::cli
