#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "properties.hpp"
#include "twb/documents.hpp"
#include "twb/runner.hpp"
#include "twb/service.hpp"

// Multi-step service scenarios shared by the unit suites and the acceptance
// runner.
namespace twb::testing {

ServiceConfig service_config(const std::filesystem::path& data_dir, const RunnerConfig& runtime);

// A session holding `spec` with the CoffeeCan cfg and a mock LLM driven by
// `mock_script`.
std::string coffeecan_session(Service& service, const std::filesystem::path& script_dir, const std::string& spec,
                              const Json& mock_script);

struct RepairOutcome {
  Json status;                  // final status document, attempts included
  std::size_t attempt_files = 0;
  bool append_only = true;      // no attempt file changed or vanished while the repair ran
  std::vector<std::string> append_violations;
};

// Starts a repair on the buggy spec and watches repair/<r>/ until it finishes.
RepairOutcome watched_repair(const std::filesystem::path& workdir, const RunnerConfig& runtime,
                             const Json& mock_script, const Json& body);

// Kills a service process (SIGKILL) during a long run, restarts on the same
// data directory and checks the recovered state.
Problems crash_safety_problems(const std::filesystem::path& workdir);

}  // namespace twb::testing
