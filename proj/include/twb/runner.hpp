#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "twb/state_graph.hpp"
#include "twb/tlc_parser.hpp"

namespace twb {

struct RunOptions {
  int timeout_seconds = 600;
  int worker_count = 1;
  // Off by default: terminating models end in states with no successor,
  // which the graph reports as terminal rather than as errors.
  bool deadlock_check = false;
  bool dump_graph = true;
  // -fp 0 pins TLC's fingerprint polynomial so dumps are reproducible.
  std::vector<std::string> extra_flags = {"-fp", "0"};

  // Validating constructor; throws InvalidArgument.
  static RunOptions make(int timeout_seconds, int worker_count, bool deadlock_check = false,
                         bool dump_graph = true);
  void validate() const;

  friend bool operator==(const RunOptions&, const RunOptions&) = default;
};

struct WorkspaceHandle {
  std::string run_id;
  std::filesystem::path root_path;
  std::string module_name;
  std::filesystem::path spec_path;
  std::filesystem::path cfg_path;
  std::filesystem::path dot_path;  // includes the .dot extension
  std::filesystem::path stdout_path;
};

enum class RunStatus { Queued, Running, Done, Failed, Cancelled, Timeout };

std::string_view run_status_name(RunStatus status) noexcept;
std::optional<RunStatus> run_status_from_name(std::string_view name) noexcept;

struct TlcRunResult {
  std::string run_id;
  RunStatus status = RunStatus::Done;
  int exit_status = 0;
  std::int64_t wall_time_ms = 0;
  RunStats stats;
  std::optional<TlcError> error;
  std::optional<StateGraph> graph;
  std::string raw_output_path;
  std::vector<TlcMessage> messages;

  // Finished normally with exit 0 and nothing to report.
  bool clean() const { return status == RunStatus::Done && !error && exit_status == 0; }
};

struct RunnerConfig {
  std::filesystem::path tlc_jar;
  std::string java_bin = "java";
  std::filesystem::path workspace_root;  // parent of per-run directories

  // MW_TLC_JAR, MW_JAVA_BIN; workspaces under $TMPDIR/twb-runs.
  static RunnerConfig from_env();
};

// Argument vector for one checker invocation, relative to the workspace root.
std::vector<std::string> tlc_command(const RunnerConfig& config, const WorkspaceHandle& workspace,
                                     const RunOptions& options);

// Writes spec and cfg into `dir`, which must not exist yet.
WorkspaceHandle prepare_workspace_at(const std::filesystem::path& dir, std::string run_id,
                                     std::string_view spec_text, std::string_view cfg_text);

enum class CancelAck { Cancelled, AlreadyFinished };

class Runner {
 public:
  explicit Runner(RunnerConfig config = RunnerConfig::from_env());

  const RunnerConfig& config() const { return config_; }

  // Fresh directory under config().workspace_root with a new run id.
  WorkspaceHandle prepare_workspace(std::string_view spec_text, std::string_view cfg_text,
                                    const RunOptions& options);

  // Makes an externally prepared workspace known to cancel_run.
  void register_workspace(const WorkspaceHandle& workspace);

  // Blocks until the checker exits, the deadline passes, or the run is
  // cancelled. Throws RuntimeMissing and CheckerCrashed.
  TlcRunResult run_check(const WorkspaceHandle& workspace, const RunOptions& options);

  CancelAck cancel_run(const std::string& run_id);

  // Throws RuntimeMissing unless both jar and launcher are present.
  void check_runtime() const;

 private:
  struct Active {
    std::atomic<bool> cancel{false};
    bool finished = false;
  };

  RunnerConfig config_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Active>> runs_;
};

// Parses whatever a finished, killed or cancelled run left behind.
TlcRunResult assemble_result(const WorkspaceHandle& workspace, const RunOptions& options, RunStatus status,
                             int exit_status, std::int64_t wall_time_ms);

}  // namespace twb
