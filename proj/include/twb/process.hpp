#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <sys/types.h>

namespace twb {

// A child process in its own process group with stdout and stderr redirected
// to one file. Not copyable; the destructor kills a still-running child.
class ChildProcess {
 public:
  ChildProcess(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
               const std::filesystem::path& output_path);
  ~ChildProcess();

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  pid_t pid() const { return pid_; }

  // Non-blocking. Exit status, or 128 + signal number for signalled children.
  std::optional<int> poll();

  // Blocks until exit or the timeout elapses.
  std::optional<int> wait_for(std::chrono::milliseconds timeout);

  // SIGKILL to the whole group, then reaps.
  int kill_and_reap();

 private:
  pid_t pid_ = -1;
  std::optional<int> status_;
};

// Resolves a launcher name against PATH; absolute or relative paths are checked
// directly. Returns nullopt when nothing executable is found.
std::optional<std::filesystem::path> find_executable(const std::string& name);

}  // namespace twb
