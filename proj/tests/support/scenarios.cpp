#include "scenarios.hpp"

#include <chrono>
#include <csignal>
#include <map>
#include <thread>

#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "fixtures.hpp"
#include "twb/error.hpp"
#include "twb/io.hpp"

namespace twb::testing {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

ServiceConfig service_config(const fs::path& data_dir, const RunnerConfig& runtime) {
  ServiceConfig config;
  config.data_dir = data_dir;
  config.runner = runtime;
  config.clock = [] { return std::string("2024-01-01T00:00:00Z"); };
  return config;
}

std::string coffeecan_session(Service& service, const fs::path& script_dir, const std::string& spec,
                              const Json& mock_script) {
  std::string id = service.create_session();
  service.put_spec(id, spec, model_cfg());
  Json settings;
  settings["provider"] = "mock";
  settings["mock_script"] = write_mock_script(script_dir, "mock-" + id + ".json", mock_script).string();
  service.put_llm_settings(id, settings);
  return id;
}

namespace {

// Attempt files currently on disk, by name.
std::map<std::string, std::string> attempt_snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    auto name = e.path().filename().string();
    if (name == "status.json" || e.path().extension() != ".json") continue;
    try {
      out[name] = read_file(e.path());
    } catch (const Error&) {
    }
  }
  return out;
}

// Restarts on `data` and checks what recovery made of the interrupted run 1.
void recovered_state_problems(const fs::path& data, const RunnerConfig& runtime, const std::string& id,
                              Problems& problems) {
  fs::path run_dir = data / "sessions" / id / "runs" / "1";
  Service restarted(service_config(data, runtime));
  Json session = restarted.get_session(id);
  if (session["runs"].size() != 1) {
    problems.push_back("session lost its run");
  } else if (session["runs"][0]["status"] != "failed") {
    problems.push_back("run listed as " + session["runs"][0]["status"].dump());
  }
  Json run = restarted.get_run(id, "1");
  if (run["status"] != "failed") problems.push_back("run document says " + run["status"].dump());
  if (!run["failure"].is_object() || run["failure"]["code"] != "Interrupted") {
    problems.push_back("run failure is " + run["failure"].dump());
  }
  if (run["graph_available"] != false) problems.push_back("run claims a graph");
  if (fs::exists(run_dir / "graph.json")) problems.push_back("partial graph document survived restart");
  for (const auto& e : fs::recursive_directory_iterator(data)) {
    if (e.path().filename().string().find(".tmp.") != std::string::npos) {
      problems.push_back("temporary file survived: " + e.path().string());
    }
  }
  try {
    restarted.graph_document(id, "1");
    problems.push_back("graph served for an interrupted run");
  } catch (const Error& e) {
    if (e.code() != ErrorCode::MissingGraph) problems.push_back(std::string("graph request failed with ") + e.what());
  }
}

}  // namespace

RepairOutcome watched_repair(const fs::path& workdir, const RunnerConfig& runtime, const Json& mock_script,
                             const Json& body) {
  Service service(service_config(workdir / "data", runtime));
  std::string id = coffeecan_session(service, workdir, buggy_spec(), mock_script);
  std::string r = service.start_repair(id, body);
  fs::path dir = workdir / "data" / "sessions" / id / "repair" / r;

  RepairOutcome outcome;
  std::map<std::string, std::string> seen;
  auto observe = [&] {
    auto now = attempt_snapshot(dir);
    for (const auto& [name, bytes] : seen) {
      auto it = now.find(name);
      if (it == now.end()) {
        outcome.append_violations.push_back(name + " disappeared");
      } else if (it->second != bytes) {
        outcome.append_violations.push_back(name + " was rewritten");
      }
    }
    for (const auto& [name, bytes] : now) seen.emplace(name, bytes);
  };
  while (service.get_session(id)["repairs"].back()["status"] == "running") {
    observe();
    std::this_thread::sleep_for(5ms);
  }
  observe();
  outcome.status = service.wait_repair(id, r);
  outcome.attempt_files = seen.size();
  outcome.append_only = outcome.append_violations.empty();
  return outcome;
}

Problems crash_safety_problems(const fs::path& workdir) {
  Problems problems;
  // The fake checker records its pid so the orphan can be cleaned up.
  RunnerConfig runtime = fake_runtime(workdir / "tlc", "echo $$ > launcher.pid\nsleep 60");
  fs::path data = workdir / "data";

  int ready[2];
  if (::pipe(ready) != 0) return {"pipe failed"};
  pid_t child = ::fork();
  if (child < 0) return {"fork failed"};
  if (child == 0) {
    ::close(ready[0]);
    try {
      Service service(service_config(data, runtime));
      std::string id = service.create_session();
      service.put_spec(id, correct_spec(), model_cfg());
      std::string run = service.start_check(id);
      auto pid_file = data / "sessions" / id / "runs" / run / "launcher.pid";
      for (int i = 0; i < 1000; ++i) {
        if (service.get_run(id, run)["status"] == "running" && fs::exists(pid_file)) break;
        std::this_thread::sleep_for(10ms);
      }
      std::string line = id + "\n";
      [[maybe_unused]] auto n = ::write(ready[1], line.data(), line.size());
      while (true) ::pause();
    } catch (...) {
      ::_exit(2);
    }
  }
  ::close(ready[1]);
  std::string id;
  pollfd pfd{ready[0], POLLIN, 0};
  if (::poll(&pfd, 1, 20000) > 0) {
    char buf[64];
    ssize_t n = ::read(ready[0], buf, sizeof buf);
    if (n > 0) id.assign(buf, static_cast<std::size_t>(n));
  }
  ::close(ready[0]);
  ::kill(child, SIGKILL);
  ::waitpid(child, nullptr, 0);
  while (!id.empty() && id.back() == '\n') id.pop_back();
  if (id.size() != 32) return {"service child never reported a running check"};

  fs::path run_dir = data / "sessions" / id / "runs" / "1";
  try {
    pid_t launcher = std::stoi(read_file(run_dir / "launcher.pid"));
    ::kill(-launcher, SIGKILL);
  } catch (...) {
    problems.push_back("fake checker pid missing");
  }
  // What a writer killed half way could have left behind.
  write_file(run_dir / "graph.json", "{\"nodes\": [");
  write_file(run_dir / "result.json.tmp.12345", "{");

  try {
    recovered_state_problems(data, runtime, id, problems);
    // the session stays usable
    Service again(service_config(data, coffeecan_runtime(workdir / "tlc2")));
    std::string run2 = again.start_check(id);
    if (again.wait_run(id, run2)["status"] != "done") problems.push_back("new run after restart did not finish");
  } catch (const std::exception& e) {
    problems.push_back(std::string("restart failed: ") + e.what());
  }
  return problems;
}

}  // namespace twb::testing
