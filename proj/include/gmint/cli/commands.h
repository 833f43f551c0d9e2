#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "gmint/cli/artifacts.h"
#include "gmint/cli/config.h"

namespace gmint::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDependency = 3;
inline constexpr int kExitNumeric = 4;

// Output directory of one experiment, held under its lock for the lifetime
// of the object. Stage commands read and update its artifact index.
class Workspace {
 public:
  Workspace(ExperimentConfig config, std::ostream& out);

  const ExperimentConfig& config() const { return config_; }
  const std::string& config_hash() const { return config_hash_; }
  const std::filesystem::path& root() const { return config_.output_dir; }
  ArtifactIndex& index() { return index_; }
  std::ostream& out() { return out_; }

 private:
  ExperimentConfig config_;
  std::string config_hash_;
  std::unique_ptr<OutputLock> lock_;
  ArtifactIndex index_;
  std::ostream& out_;
};

void cmd_gen_data(Workspace& ws);
void cmd_train_target(Workspace& ws);
// Features of the first sweep cell: its D and E draw, labelled 1 and 0.
void cmd_extract_features(Workspace& ws);
void cmd_train_auditor(Workspace& ws);
// Scores the MINT-test rows of the extracted cell and writes report/.
void cmd_evaluate(Workspace& ws);
// Every cell of the sweep plan; finished cells are kept under sweep/cells and
// reused when the command is rerun with the same configuration.
void cmd_sweep(Workspace& ws);
// All stages in order.
void cmd_run(Workspace& ws);
// Re-hashes every artifact listed in <dir>/index.json. Returns the problems.
std::vector<std::string> cmd_verify(const std::filesystem::path& dir, std::ostream& out);

// Maps the exception in flight to the documented exit codes.
int exit_code_for_current_exception(std::ostream& err);

// Entry point of the gmint tool.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gmint::cli
