#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "twb/documents.hpp"
#include "twb/graph_core.hpp"
#include "twb/llm_gateway.hpp"
#include "twb/runner.hpp"

namespace twb {

struct ServiceConfig {
  std::filesystem::path data_dir;
  RunnerConfig runner = RunnerConfig::from_env();
  RunOptions default_options;
  ViewLimits view_limits;
  std::function<std::string()> clock;  // defaults to utc_timestamp
  // One client per session so mock scripts replay from the start in each.
  std::function<std::shared_ptr<LlmClient>()> llm_client_factory;
  std::function<std::optional<std::string>(const std::string&)> getenv = process_env;
};

struct FoldDelta {
  Fingerprint node;
  bool folded = true;
};

// Sessions on disk under <data_dir>/sessions/<id>/ with one background job
// per run, digest and repair. All documents returned are the ones persisted.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return config_; }

  std::string create_session();
  Json get_session(const std::string& id);
  void put_spec(const std::string& id, const std::string& spec, const std::string& cfg);
  Json get_spec(const std::string& id);
  Json get_llm_settings(const std::string& id);
  void put_llm_settings(const std::string& id, const Json& settings);

  // Asynchronous; throws SpecMissing, ConcurrentRun, RuntimeMissing,
  // MissingModuleHeader before anything starts.
  std::string start_check(const std::string& id, const Json& options = nullptr);
  Json get_run(const std::string& id, const std::string& run);
  Json wait_run(const std::string& id, const std::string& run);
  Json cancel_run(const std::string& id, const std::string& run);

  Json graph_document(const std::string& id, const std::string& run);
  StateGraph load_graph(const std::string& id, const std::string& run);
  Json graph_view(const std::string& id, const std::string& run, std::optional<std::size_t> tree,
                  std::optional<std::size_t> depth);
  Json apply_folds(const std::string& id, const std::string& run, const std::vector<FoldDelta>& deltas);
  Json summary(const std::string& id, const std::string& run);

  std::string start_digest(const std::string& id, const Json& body);
  Json get_digest(const std::string& id, const std::string& digest);
  Json wait_digest(const std::string& id, const std::string& digest);

  std::string start_repair(const std::string& id, const Json& body);
  Json get_repair(const std::string& id, const std::string& repair);
  Json wait_repair(const std::string& id, const std::string& repair);
  Json accept_repair(const std::string& id, const std::string& repair, const Json& body);
  Json cancel_repair(const std::string& id, const std::string& repair);

  // The definition span for an action label, or null.
  Json source_location(const std::string& id, const std::string& action);

 private:
  struct SessionState;
  struct LoadedRun;

  std::shared_ptr<SessionState> session(const std::string& id);
  std::filesystem::path session_dir(const std::string& id) const;
  void load_existing();
  void recover(SessionState& s);
  void save_session_locked(SessionState& s);
  std::shared_ptr<const LoadedRun> loaded_run(SessionState& s, const std::string& run);
  std::string latest_graph_run(SessionState& s);
  LlmConfig llm_config_for(SessionState& s, const Json& request_override);
  void spawn(std::function<void()> job);
  void run_job(std::shared_ptr<SessionState> s, std::string run, WorkspaceHandle ws, RunOptions options);

  ServiceConfig config_;
  Runner runner_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<SessionState>> sessions_;
  std::mutex jobs_mutex_;
  std::vector<std::thread> jobs_;
};

// Runs a finished check through the post-processing the service applies:
// violation marking on the graph. Warnings describe anything skipped.
void finalize_graph(TlcRunResult& result, std::vector<std::string>& warnings);

}  // namespace twb
