#include "twb/runner.hpp"

#include <cstdlib>
#include <thread>

#include "twb/error.hpp"
#include "twb/io.hpp"
#include "twb/process.hpp"
#include "twb/source_mapper.hpp"

namespace twb {

namespace fs = std::filesystem;

RunOptions RunOptions::make(int timeout_seconds, int worker_count, bool deadlock_check, bool dump_graph) {
  RunOptions options;
  options.timeout_seconds = timeout_seconds;
  options.worker_count = worker_count;
  options.deadlock_check = deadlock_check;
  options.dump_graph = dump_graph;
  options.validate();
  return options;
}

void RunOptions::validate() const {
  if (timeout_seconds < 1) throw Error(ErrorCode::InvalidArgument, "timeout_seconds must be >= 1");
  if (worker_count < 1) throw Error(ErrorCode::InvalidArgument, "worker_count must be >= 1");
}

std::string_view run_status_name(RunStatus status) noexcept {
  switch (status) {
    case RunStatus::Queued: return "queued";
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
    case RunStatus::Cancelled: return "cancelled";
    case RunStatus::Timeout: return "timeout";
  }
  return "failed";
}

std::optional<RunStatus> run_status_from_name(std::string_view name) noexcept {
  for (auto s : {RunStatus::Queued, RunStatus::Running, RunStatus::Done, RunStatus::Failed, RunStatus::Cancelled,
                 RunStatus::Timeout}) {
    if (run_status_name(s) == name) return s;
  }
  return std::nullopt;
}

RunnerConfig RunnerConfig::from_env() {
  RunnerConfig config;
  if (const char* jar = std::getenv("MW_TLC_JAR")) config.tlc_jar = jar;
  if (const char* java = std::getenv("MW_JAVA_BIN"); java && *java) config.java_bin = java;
  config.workspace_root = fs::temp_directory_path() / "twb-runs";
  return config;
}

std::vector<std::string> tlc_command(const RunnerConfig& config, const WorkspaceHandle& workspace,
                                     const RunOptions& options) {
  std::vector<std::string> argv = {
      config.java_bin,
      "-XX:+UseParallelGC",
      "-jar",
      fs::absolute(config.tlc_jar).string(),
      "-tool",
      "-config",
      workspace.cfg_path.filename().string(),
      "-workers",
      std::to_string(options.worker_count),
  };
  if (!options.deadlock_check) argv.push_back("-deadlock");
  argv.insert(argv.end(), options.extra_flags.begin(), options.extra_flags.end());
  if (options.dump_graph) {
    argv.push_back("-dump");
    argv.push_back("dot,actionlabels");
    argv.push_back(workspace.dot_path.stem().string());
  }
  argv.push_back(workspace.spec_path.filename().string());
  return argv;
}

WorkspaceHandle prepare_workspace_at(const fs::path& dir, std::string run_id, std::string_view spec_text,
                                     std::string_view cfg_text) {
  auto module = find_module_name(spec_text);
  if (!module) throw Error(ErrorCode::MissingModuleHeader, "spec has no `---- MODULE <name> ----` line");

  std::error_code ec;
  fs::create_directories(dir.parent_path(), ec);
  if (!fs::create_directory(dir, ec) || ec) {
    throw Error(ErrorCode::IoFailure, "cannot create workspace " + dir.string() +
                                          (ec ? ": " + ec.message() : ": already exists"));
  }
  WorkspaceHandle ws;
  ws.run_id = std::move(run_id);
  ws.root_path = dir;
  ws.module_name = *module;
  ws.spec_path = dir / (*module + ".tla");
  ws.cfg_path = dir / "model.cfg";
  ws.dot_path = dir / "graph.dot";
  ws.stdout_path = dir / "stdout.log";
  write_file(ws.spec_path, spec_text);
  write_file(ws.cfg_path, cfg_text);
  return ws;
}

Runner::Runner(RunnerConfig config) : config_(std::move(config)) {}

WorkspaceHandle Runner::prepare_workspace(std::string_view spec_text, std::string_view cfg_text,
                                          const RunOptions& options) {
  options.validate();
  std::string run_id = random_token(8);
  auto ws = prepare_workspace_at(config_.workspace_root / run_id, run_id, spec_text, cfg_text);
  register_workspace(ws);
  return ws;
}

void Runner::register_workspace(const WorkspaceHandle& workspace) {
  std::lock_guard lock(mutex_);
  runs_.try_emplace(workspace.run_id, std::make_shared<Active>());
}

void Runner::check_runtime() const {
  std::error_code ec;
  if (config_.tlc_jar.empty()) {
    throw Error(ErrorCode::RuntimeMissing, "no checker archive configured (set MW_TLC_JAR)");
  }
  if (!fs::is_regular_file(config_.tlc_jar, ec)) {
    throw Error(ErrorCode::RuntimeMissing, "checker archive not found: " + config_.tlc_jar.string());
  }
  if (!find_executable(config_.java_bin)) {
    throw Error(ErrorCode::RuntimeMissing, "java launcher not found: " + config_.java_bin);
  }
}

TlcRunResult Runner::run_check(const WorkspaceHandle& workspace, const RunOptions& options) {
  options.validate();
  check_runtime();
  register_workspace(workspace);
  std::shared_ptr<Active> active;
  {
    std::lock_guard lock(mutex_);
    active = runs_.at(workspace.run_id);
  }
  auto finish = [&] {
    std::lock_guard lock(mutex_);
    active->finished = true;
  };

  auto started = std::chrono::steady_clock::now();
  auto deadline = started + std::chrono::seconds(options.timeout_seconds);
  RunStatus status = RunStatus::Done;
  int exit_status = 0;
  try {
    ChildProcess child(tlc_command(config_, workspace, options), workspace.root_path, workspace.stdout_path);
    while (true) {
      if (auto code = child.poll()) {
        exit_status = *code;
        break;
      }
      if (active->cancel) {
        exit_status = child.kill_and_reap();
        status = RunStatus::Cancelled;
        break;
      }
      if (std::chrono::steady_clock::now() >= deadline) {
        exit_status = child.kill_and_reap();
        status = RunStatus::Timeout;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  } catch (const Error& e) {
    finish();
    if (e.code() == ErrorCode::IoFailure) throw Error(ErrorCode::RuntimeMissing, e.what());
    throw;
  }
  auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  finish();
  auto result = assemble_result(workspace, options, status, exit_status, wall.count());
  result.run_id = workspace.run_id;
  return result;
}

CancelAck Runner::cancel_run(const std::string& run_id) {
  std::lock_guard lock(mutex_);
  auto it = runs_.find(run_id);
  if (it == runs_.end()) throw Error(ErrorCode::UnknownRunId, "unknown run id " + run_id);
  if (it->second->finished) return CancelAck::AlreadyFinished;
  it->second->cancel = true;
  return CancelAck::Cancelled;
}

TlcRunResult assemble_result(const WorkspaceHandle& workspace, const RunOptions& options, RunStatus status,
                             int exit_status, std::int64_t wall_time_ms) {
  TlcRunResult result;
  result.run_id = workspace.run_id;
  result.status = status;
  result.exit_status = exit_status;
  result.wall_time_ms = wall_time_ms;
  result.raw_output_path = workspace.stdout_path.string();

  std::string raw;
  std::error_code ec;
  if (fs::exists(workspace.stdout_path, ec)) raw = read_file(workspace.stdout_path);

  const bool finished = status == RunStatus::Done;
  try {
    ToolOutput out = parse_tool_output(raw);
    result.messages = std::move(out.messages);
    result.stats = out.stats;
    if (finished) result.error = std::move(out.error);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnrecognizedFraming) throw;
    if (finished) {
      throw Error(ErrorCode::CheckerCrashed, "checker exited with status " + std::to_string(exit_status) +
                                                 " without tool-mode output: " + raw.substr(0, 400));
    }
  }

  if (status == RunStatus::Timeout) {
    TlcError timeout;
    timeout.category = ErrorCategory::Timeout;
    timeout.message = "checker exceeded the " + std::to_string(options.timeout_seconds) + " s deadline";
    result.error = std::move(timeout);
  } else if (finished && !result.error && exit_status != 0) {
    TlcError unknown;
    unknown.category = ErrorCategory::Unknown;
    unknown.message = "checker exited with status " + std::to_string(exit_status);
    result.error = std::move(unknown);
  }

  if (options.dump_graph && fs::exists(workspace.dot_path, ec)) {
    try {
      result.graph = parse_dot_graph(read_file(workspace.dot_path),
                                     finished ? DotParseMode::Strict : DotParseMode::Partial);
    } catch (const Error&) {
      // A dump the checker abandoned (e.g. after a parse error) is not a graph.
    }
  }
  return result;
}

}  // namespace twb
