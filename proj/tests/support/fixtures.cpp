#include "fixtures.hpp"

#include <cstdlib>

#include <sys/stat.h>
#include <sys/wait.h>

#include "twb/error.hpp"
#include "twb/io.hpp"
#include "twb/process.hpp"

namespace twb::testing {

namespace fs = std::filesystem;

namespace {

std::string replace_once(std::string text, const std::string& from, const std::string& to) {
  auto pos = text.find(from);
  if (pos == std::string::npos) throw std::runtime_error("fixture text not found: " + from);
  return text.replace(pos, from.size(), to);
}

const char* kCorrectUpdate = "!.black = @ + 1, !.white = @ - 2";

}  // namespace

fs::path fixture_dir() { return fs::path(TWB_FIXTURE_DIR) / "tlc"; }

std::string fixture_text(const std::string& name) { return read_file(fixture_dir() / name); }

ToolOutput fixture_output(const std::string& name) { return parse_tool_output(fixture_text(name + ".out")); }

int fixture_exit(const std::string& name) { return std::stoi(fixture_text(name + ".exit")); }

StateGraph fixture_graph(const std::string& name) { return parse_dot_graph(fixture_text(name + ".dot")); }

std::string correct_spec() { return fixture_text("CoffeeCan.tla"); }
std::string buggy_spec() { return fixture_text("CoffeeCan_buggy.tla"); }
std::string model_cfg() { return fixture_text("model.cfg"); }

std::string wrong_spec_a() { return replace_once(correct_spec(), kCorrectUpdate, "!.black = @ + 1, !.white = @ - 3"); }
std::string wrong_spec_b() { return replace_once(correct_spec(), kCorrectUpdate, "!.black = @ + 2, !.white = @ - 1"); }

std::optional<RunnerConfig> tlc_runtime(const fs::path& workspace_root) {
  // The environment wins, even when empty; otherwise the paths configured at build time.
  const char* jar = std::getenv("MW_TLC_JAR");
  const char* java = std::getenv("MW_JAVA_BIN");
  if (!jar) jar = TWB_DEFAULT_TLC_JAR;
  if (!java) java = TWB_DEFAULT_JAVA_BIN;
  if (!jar || !*jar || !fs::exists(jar)) return std::nullopt;
  std::string launcher = java && *java ? java : "java";
  if (!find_executable(launcher)) return std::nullopt;
  RunnerConfig config;
  config.tlc_jar = jar;
  config.java_bin = launcher;
  config.workspace_root = workspace_root.empty() ? fs::temp_directory_path() / "twb-test-runs" : workspace_root;
  return config;
}

TempDir::TempDir() {
  path_ = fs::temp_directory_path() / ("twb-test-" + random_token(8));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::permissions(path_, fs::perms::owner_all, fs::perm_options::add, ec);
  fs::remove_all(path_, ec);
}

fs::path write_mock_script(const fs::path& dir, const std::string& name, const Json& script) {
  auto path = dir / name;
  write_file(path, script.dump(2));
  return path;
}

RunnerConfig fake_runtime(const fs::path& dir, const std::string& script_body) {
  fs::create_directories(dir);
  auto launcher = dir / "fake-java";
  write_file(launcher, "#!/bin/sh\n" + script_body + "\n");
  ::chmod(launcher.c_str(), 0755);
  auto jar = dir / "fake-tla2tools.jar";
  write_file(jar, "");
  RunnerConfig config;
  config.tlc_jar = jar;
  config.java_bin = launcher.string();
  config.workspace_root = dir / "runs";
  return config;
}

RunnerConfig coffeecan_runtime(const fs::path& dir, int delay) {
  auto replay = [](const std::string& name) {
    auto base = (fixture_dir() / name).string();
    return "cat '" + base + ".out'; cp '" + base + ".dot' graph.dot; exit " + std::to_string(fixture_exit(name));
  };
  std::string body = "sleep " + std::to_string(delay) +
                     "\nif grep -q -F '!.white = @ - 2]' *.tla; then\n  " + replay("coffeecan_ok") +
                     "\nelse\n  " + replay("coffeecan_buggy") + "\nfi";
  return fake_runtime(dir, body);
}

fs::path cli_path() { return TWB_CLI_PATH; }

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

CliRun run_twb(const std::vector<std::string>& args, const fs::path& cwd, const std::vector<std::string>& env) {
  fs::create_directories(cwd);
  auto out_path = cwd / ".twb-stdout";
  auto err_path = cwd / ".twb-stderr";
  std::string cmd = "cd " + shell_quote(cwd.string()) + " && env";
  for (const auto& e : env) cmd += " " + shell_quote(e);
  cmd += " " + shell_quote(cli_path().string());
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " >" + shell_quote(out_path.string()) + " 2>" + shell_quote(err_path.string()) + " </dev/null";
  int status = std::system(cmd.c_str());
  CliRun run;
  run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  run.out = read_file(out_path);
  run.err = read_file(err_path);
  fs::remove(out_path);
  fs::remove(err_path);
  return run;
}

}  // namespace twb::testing
