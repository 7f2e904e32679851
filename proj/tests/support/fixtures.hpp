#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "twb/documents.hpp"
#include "twb/runner.hpp"
#include "twb/state_graph.hpp"
#include "twb/tlc_parser.hpp"

namespace twb::testing {

std::filesystem::path fixture_dir();
std::string fixture_text(const std::string& name);

// Recorded checker runs: <name>.out, <name>.exit, <name>.dot
ToolOutput fixture_output(const std::string& name);
int fixture_exit(const std::string& name);
StateGraph fixture_graph(const std::string& name);

std::string correct_spec();
std::string buggy_spec();
std::string model_cfg();
// Two more wrong variants of the PickSameColorWhite update, for repair tests.
std::string wrong_spec_a();
std::string wrong_spec_b();

inline constexpr const char* kInvariant = "WhiteParity";
inline constexpr const char* kInitialState = "[black |-> 0, white |-> 5]";
inline constexpr const char* kTerminalState = "[black |-> 0, white |-> 1]";
inline constexpr const char* kBuggyViolation = "[black |-> 1, white |-> 4]";

// Jar and launcher from MW_TLC_JAR / MW_JAVA_BIN, falling back to the ones
// configured at build time, when they exist.
std::optional<RunnerConfig> tlc_runtime(const std::filesystem::path& workspace_root = {});

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Writes a mock LLM script and returns its path.
std::filesystem::path write_mock_script(const std::filesystem::path& dir, const std::string& name, const Json& script);

// An executable /bin/sh script standing in for the java launcher, plus an
// empty file standing in for the jar.
RunnerConfig fake_runtime(const std::filesystem::path& dir, const std::string& script_body);

// A fake launcher that replays the recorded CoffeeCan runs: the correct
// output when the spec under check contains the correct white update, the
// buggy output otherwise. `delay` seconds of sleep come first.
RunnerConfig coffeecan_runtime(const std::filesystem::path& dir, int delay = 0);

std::filesystem::path cli_path();

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the twb binary in `cwd` with extra VAR=value environment entries.
CliRun run_twb(const std::vector<std::string>& args, const std::filesystem::path& cwd,
               const std::vector<std::string>& env = {});

}  // namespace twb::testing
