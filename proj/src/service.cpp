#include "twb/service.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <regex>

#include "twb/digest_engine.hpp"
#include "twb/error.hpp"
#include "twb/io.hpp"
#include "twb/repair_engine.hpp"
#include "twb/source_mapper.hpp"
#include "twb/text.hpp"

namespace twb {

namespace fs = std::filesystem;

namespace {

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoFailure, "corrupt document " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) { write_file_atomic(path, to_text(doc)); }

bool is_active_status(const std::string& status) { return status == "queued" || status == "running"; }

Json failure_json(const std::optional<std::pair<ErrorCode, std::string>>& failure) {
  if (!failure) return nullptr;
  return error_body(failure->first, failure->second);
}

Json run_document(const TlcRunResult& result, const std::optional<std::pair<ErrorCode, std::string>>& failure,
                  const std::vector<std::string>& warnings) {
  Json doc = run_result_to_json(result);
  doc["failure"] = failure_json(failure);
  doc["warnings"] = warnings;
  return doc;
}

Json* find_entry(Json& list, const std::string& id) {
  for (auto& entry : list) {
    if (entry.at("id").get<std::string>() == id) return &entry;
  }
  return nullptr;
}

void remove_temporaries(const fs::path& dir) {
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(dir, ec); it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    if (it->is_regular_file(ec) && it->path().filename().string().find(".tmp.") != std::string::npos) {
      fs::remove(it->path(), ec);
    }
  }
}

void store_blob(const fs::path& session_dir, const std::string& content) {
  auto path = session_dir / "blobs" / sha256_hex(content);
  std::error_code ec;
  if (!fs::exists(path, ec)) write_file_atomic(path, content);
}

std::optional<LineSelection> parse_selection(const Json& value) {
  if (value.is_null()) return std::nullopt;
  if (value.is_string()) {
    static const std::regex re(R"(^\s*(\d+)\s*:\s*(\d+)\s*$)");
    std::smatch m;
    std::string text = value.get<std::string>();
    if (!std::regex_match(text, m, re)) throw Error(ErrorCode::InvalidArgument, "selection must look like L1:L2");
    return LineSelection{std::stoi(m[1].str()), std::stoi(m[2].str())};
  }
  if (value.is_object()) {
    try {
      return LineSelection{value.at("start_line").get<int>(), value.at("end_line").get<int>()};
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::InvalidArgument, "selection needs integer start_line and end_line");
    }
  }
  throw Error(ErrorCode::InvalidArgument, "selection must be an object or \"L1:L2\"");
}

}  // namespace

struct Service::LoadedRun {
  StateGraph graph;
  SpanningForest forest;
};

struct Service::SessionState {
  std::string id;
  fs::path dir;
  std::mutex mutex;
  std::condition_variable changed;
  Json doc;
  std::optional<std::string> active_run;
  std::optional<std::string> active_digest;
  std::optional<std::string> active_repair;
  std::shared_ptr<std::atomic<bool>> repair_cancel;
  std::string repair_check_key;
  std::map<std::string, std::shared_ptr<const LoadedRun>> loaded;
  std::shared_ptr<LlmClient> client;
};

void finalize_graph(TlcRunResult& result, std::vector<std::string>& warnings) {
  if (!result.graph || !result.error || !result.error->trace || !is_violation(result.error->category)) return;
  try {
    result.graph = mark_violations(std::move(*result.graph), *result.error);
  } catch (const Error& e) {
    warnings.push_back(std::string(code_name(e.code())) + ": " + e.what());
  }
}

Service::Service(ServiceConfig config) : config_(std::move(config)), runner_(config_.runner) {
  if (!config_.clock) config_.clock = utc_timestamp;
  if (!config_.llm_client_factory) config_.llm_client_factory = [] { return std::make_shared<LlmClient>(); };
  std::error_code ec;
  fs::create_directories(config_.data_dir / "sessions", ec);
  load_existing();
}

Service::~Service() {
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, s] : sessions_) {
      std::lock_guard slock(s->mutex);
      if (s->active_run) {
        try {
          runner_.cancel_run(id + "/" + *s->active_run);
        } catch (const Error&) {
        }
      }
      if (s->repair_cancel) *s->repair_cancel = true;
      if (!s->repair_check_key.empty()) {
        try {
          runner_.cancel_run(s->repair_check_key);
        } catch (const Error&) {
        }
      }
    }
  }
  std::vector<std::thread> jobs;
  {
    std::lock_guard lock(jobs_mutex_);
    jobs.swap(jobs_);
  }
  for (auto& t : jobs) t.join();
}

fs::path Service::session_dir(const std::string& id) const { return config_.data_dir / "sessions" / id; }

void Service::spawn(std::function<void()> job) {
  std::lock_guard lock(jobs_mutex_);
  jobs_.emplace_back(std::move(job));
}

void Service::load_existing() {
  std::error_code ec;
  auto root = config_.data_dir / "sessions";
  if (!fs::is_directory(root, ec)) return;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    auto file = entry.path() / "session.json";
    if (!fs::exists(file, ec)) continue;
    auto s = std::make_shared<SessionState>();
    s->id = entry.path().filename().string();
    s->dir = entry.path();
    s->doc = read_json(file);
    s->client = config_.llm_client_factory();
    s->client->set_transcript(s->dir / "transcript.jsonl");
    recover(*s);
    sessions_.emplace(s->id, s);
  }
}

void Service::recover(SessionState& s) {
  bool dirty = false;
  for (auto& run : s.doc["runs"]) {
    if (!is_active_status(run.at("status").get<std::string>())) continue;
    std::string n = run.at("id").get<std::string>();
    auto dir = s.dir / "runs" / n;
    std::error_code ec;
    for (const char* partial : {"graph.json", "summary.json", "view.json"}) fs::remove(dir / partial, ec);
    TlcRunResult result;
    result.run_id = n;
    result.status = RunStatus::Failed;
    write_json(dir / "result.json",
               run_document(result, std::pair{ErrorCode::Interrupted, "the service stopped while this run was active"},
                            {}));
    run["status"] = "failed";
    run["finished_at"] = config_.clock();
    dirty = true;
  }
  for (auto& digest : s.doc["digests"]) {
    if (digest.at("status").get<std::string>() != "running") continue;
    Json doc;
    doc["id"] = digest.at("id");
    doc["status"] = "failed";
    doc["error"] = error_body(ErrorCode::Interrupted, "the service stopped while this digest was running");
    write_json(s.dir / "digest" / (digest.at("id").get<std::string>() + ".json"), doc);
    digest["status"] = "failed";
    dirty = true;
  }
  for (auto& repair : s.doc["repairs"]) {
    if (repair.at("status").get<std::string>() != "running") continue;
    auto status_path = s.dir / "repair" / repair.at("id").get<std::string>() / "status.json";
    Json status = read_json(status_path);
    status["state"] = "finished";
    status["final_status"] = "aborted";
    status["error"] = error_body(ErrorCode::Interrupted, "the service stopped while this repair was running");
    write_json(status_path, status);
    repair["status"] = "aborted";
    dirty = true;
  }
  remove_temporaries(s.dir);
  if (dirty) save_session_locked(s);
}

void Service::save_session_locked(SessionState& s) {
  s.doc["updated_at"] = config_.clock();
  write_json(s.dir / "session.json", s.doc);
}

std::shared_ptr<Service::SessionState> Service::session(const std::string& id) {
  static const std::regex token("^[0-9a-f]{32}$");
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (!std::regex_match(id, token) || it == sessions_.end()) {
    throw Error(ErrorCode::UnknownSession, "no session " + id);
  }
  return it->second;
}

std::string Service::create_session() {
  std::string id = random_token(16);
  auto dir = session_dir(id);
  try {
    for (const char* sub : {"runs", "repair", "digest", "blobs"}) fs::create_directories(dir / sub);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::IoFailure, std::string("cannot create session directory: ") + e.what());
  }
  auto s = std::make_shared<SessionState>();
  s->id = id;
  s->dir = dir;
  std::string now = config_.clock();
  s->doc["id"] = id;
  s->doc["created_at"] = now;
  s->doc["updated_at"] = now;
  s->doc["spec_hash"] = nullptr;
  s->doc["llm_settings"] = Json::object();
  s->doc["run_options"] = options_to_json(config_.default_options);
  s->doc["runs"] = Json::array();
  s->doc["digests"] = Json::array();
  s->doc["repairs"] = Json::array();
  write_file_atomic(dir / "spec.tla", "");
  write_file_atomic(dir / "model.cfg", "");
  save_session_locked(*s);
  s->client = config_.llm_client_factory();
  s->client->set_transcript(dir / "transcript.jsonl");
  std::lock_guard lock(mutex_);
  sessions_.emplace(id, s);
  return id;
}

Json Service::get_session(const std::string& id) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  return s->doc;
}

void Service::put_spec(const std::string& id, const std::string& spec, const std::string& cfg) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  write_file_atomic(s->dir / "spec.tla", spec);
  write_file_atomic(s->dir / "model.cfg", cfg);
  store_blob(s->dir, spec);
  s->doc["spec_hash"] = sha256_hex(spec);
  save_session_locked(*s);
}

Json Service::get_spec(const std::string& id) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  Json doc;
  doc["spec"] = read_file(s->dir / "spec.tla");
  doc["cfg"] = read_file(s->dir / "model.cfg");
  doc["spec_hash"] = s->doc["spec_hash"];
  return doc;
}

Json Service::get_llm_settings(const std::string& id) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  return s->doc["llm_settings"];
}

void Service::put_llm_settings(const std::string& id, const Json& settings) {
  auto s = session(id);
  auto partial = PartialLlmConfig::from_json(settings);
  load_llm_config(partial, {}, config_.getenv);  // validates the combination
  std::lock_guard lock(s->mutex);
  s->doc["llm_settings"] = partial.to_json();
  save_session_locked(*s);
}

LlmConfig Service::llm_config_for(SessionState& s, const Json& request_override) {
  return load_llm_config(PartialLlmConfig::from_json(s.doc["llm_settings"]),
                         PartialLlmConfig::from_json(request_override), config_.getenv);
}

// ---------------------------------------------------------------------------
// Runs

std::string Service::start_check(const std::string& id, const Json& options_doc) {
  auto s = session(id);
  std::unique_lock lock(s->mutex);
  std::string spec = read_file(s->dir / "spec.tla");
  std::string cfg = read_file(s->dir / "model.cfg");
  if (trim(spec).empty() || trim(cfg).empty()) throw Error(ErrorCode::SpecMissing, "session has no spec or cfg");
  if (s->active_run) throw Error(ErrorCode::ConcurrentRun, "run " + *s->active_run + " is still active");
  RunOptions options = options_from_json(options_doc, options_from_json(s->doc["run_options"], config_.default_options));
  runner_.check_runtime();

  std::string n = std::to_string(s->doc["runs"].size() + 1);
  auto ws = prepare_workspace_at(s->dir / "runs" / n, id + "/" + n, spec, cfg);
  runner_.register_workspace(ws);
  TlcRunResult placeholder;
  placeholder.run_id = n;
  placeholder.status = RunStatus::Queued;
  write_json(ws.root_path / "result.json", run_document(placeholder, std::nullopt, {}));

  Json entry;
  entry["id"] = n;
  entry["status"] = "queued";
  entry["spec_hash"] = sha256_hex(spec);
  entry["options"] = options_to_json(options);
  entry["created_at"] = config_.clock();
  entry["finished_at"] = nullptr;
  s->doc["runs"].push_back(entry);
  save_session_locked(*s);
  s->active_run = n;
  spawn([this, s, n, ws, options] { run_job(s, n, ws, options); });
  return n;
}

void Service::run_job(std::shared_ptr<SessionState> s, std::string n, WorkspaceHandle ws, RunOptions options) {
  {
    std::lock_guard lock(s->mutex);
    TlcRunResult placeholder;
    placeholder.run_id = n;
    placeholder.status = RunStatus::Running;
    write_json(ws.root_path / "result.json", run_document(placeholder, std::nullopt, {}));
    (*find_entry(s->doc["runs"], n))["status"] = "running";
    save_session_locked(*s);
  }

  TlcRunResult result;
  std::optional<std::pair<ErrorCode, std::string>> failure;
  std::vector<std::string> warnings;
  try {
    result = runner_.run_check(ws, options);
  } catch (const Error& e) {
    result = TlcRunResult{};
    result.status = RunStatus::Failed;
    failure = {e.code(), e.what()};
  } catch (const std::exception& e) {
    result = TlcRunResult{};
    result.status = RunStatus::Failed;
    failure = {ErrorCode::IoFailure, e.what()};
  }
  result.run_id = n;
  try {
    if (result.graph) {
      finalize_graph(result, warnings);
      write_json(ws.root_path / "graph.json", graph_to_json(*result.graph));
      write_json(ws.root_path / "summary.json", summary_to_json(summarize_structure(*result.graph, kDigestTopK)));
    }
    write_json(ws.root_path / "result.json", run_document(result, failure, warnings));
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove(ws.root_path / "graph.json", ec);
    fs::remove(ws.root_path / "summary.json", ec);
    result.graph.reset();
    result.status = RunStatus::Failed;
    failure = {ErrorCode::IoFailure, e.what()};
    try {
      write_json(ws.root_path / "result.json", run_document(result, failure, warnings));
    } catch (const std::exception&) {
    }
  }

  std::lock_guard lock(s->mutex);
  Json& entry = *find_entry(s->doc["runs"], n);
  entry["status"] = std::string(run_status_name(result.status));
  entry["finished_at"] = config_.clock();
  s->active_run.reset();
  try {
    save_session_locked(*s);
  } catch (const Error&) {
  }
  s->changed.notify_all();
}

Json Service::get_run(const std::string& id, const std::string& run) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (!find_entry(s->doc["runs"], run)) throw Error(ErrorCode::UnknownRun, "no run " + run);
  return read_json(s->dir / "runs" / run / "result.json");
}

Json Service::wait_run(const std::string& id, const std::string& run) {
  auto s = session(id);
  std::unique_lock lock(s->mutex);
  if (!find_entry(s->doc["runs"], run)) throw Error(ErrorCode::UnknownRun, "no run " + run);
  s->changed.wait(lock, [&] { return !is_active_status((*find_entry(s->doc["runs"], run))["status"].get<std::string>()); });
  return read_json(s->dir / "runs" / run / "result.json");
}

Json Service::cancel_run(const std::string& id, const std::string& run) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (!find_entry(s->doc["runs"], run)) throw Error(ErrorCode::UnknownRun, "no run " + run);
  Json doc;
  doc["run_id"] = run;
  bool active = s->active_run == run;
  if (active) active = runner_.cancel_run(id + "/" + run) == CancelAck::Cancelled;
  doc["cancelled"] = active;
  return doc;
}

std::shared_ptr<const Service::LoadedRun> Service::loaded_run(SessionState& s, const std::string& run) {
  {
    std::lock_guard lock(s.mutex);
    if (!find_entry(s.doc["runs"], run)) throw Error(ErrorCode::UnknownRun, "no run " + run);
    if (auto it = s.loaded.find(run); it != s.loaded.end()) return it->second;
  }
  auto path = s.dir / "runs" / run / "graph.json";
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(ErrorCode::MissingGraph, "run " + run + " has no state graph");
  auto loaded = std::make_shared<LoadedRun>();
  loaded->graph = graph_from_json(read_json(path));
  loaded->forest = build_spanning_forest(loaded->graph);
  std::lock_guard lock(s.mutex);
  s.loaded.emplace(run, loaded);
  return loaded;
}

Json Service::graph_document(const std::string& id, const std::string& run) {
  auto s = session(id);
  return graph_to_json(loaded_run(*s, run)->graph);
}

StateGraph Service::load_graph(const std::string& id, const std::string& run) {
  auto s = session(id);
  return loaded_run(*s, run)->graph;
}

Json Service::graph_view(const std::string& id, const std::string& run, std::optional<std::size_t> tree,
                         std::optional<std::size_t> depth) {
  auto s = session(id);
  auto loaded = loaded_run(*s, run);
  std::lock_guard lock(s->mutex);
  auto view_path = s->dir / "runs" / run / "view.json";
  std::error_code ec;
  ViewState view = fs::exists(view_path, ec) ? view_state_from_json(read_json(view_path)) : ViewState{};
  if (tree) view.active_tree = *tree;
  if (depth) {
    if (*depth < 1) throw Error(ErrorCode::InvalidArgument, "depth must be positive");
    view.depth_limit = *depth;
  }
  RenderGraph rg = visible_view(loaded->graph, loaded->forest, view, config_.view_limits);
  write_json(view_path, view_state_to_json(view));
  return render_graph_to_json(rg, loaded->graph, view);
}

Json Service::apply_folds(const std::string& id, const std::string& run, const std::vector<FoldDelta>& deltas) {
  auto s = session(id);
  auto loaded = loaded_run(*s, run);
  std::lock_guard lock(s->mutex);
  auto view_path = s->dir / "runs" / run / "view.json";
  std::error_code ec;
  ViewState view = fs::exists(view_path, ec) ? view_state_from_json(read_json(view_path)) : ViewState{};
  for (const auto& d : deltas) view = set_fold(loaded->forest, view, d.node, d.folded);
  RenderGraph rg = visible_view(loaded->graph, loaded->forest, view, config_.view_limits);
  write_json(view_path, view_state_to_json(view));
  return render_graph_to_json(rg, loaded->graph, view);
}

Json Service::summary(const std::string& id, const std::string& run) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (!find_entry(s->doc["runs"], run)) throw Error(ErrorCode::UnknownRun, "no run " + run);
  auto path = s->dir / "runs" / run / "summary.json";
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(ErrorCode::MissingGraph, "run " + run + " has no state graph");
  return read_json(path);
}

Json Service::source_location(const std::string& id, const std::string& action) {
  auto s = session(id);
  std::string spec;
  {
    std::lock_guard lock(s->mutex);
    spec = read_file(s->dir / "spec.tla");
  }
  if (!find_module_name(spec)) return nullptr;
  auto loc = resolve_action(index_definitions(spec), action);
  return loc ? location_to_json(*loc) : Json(nullptr);
}

std::string Service::latest_graph_run(SessionState& s) {
  const Json& runs = s.doc["runs"];
  for (auto it = runs.rbegin(); it != runs.rend(); ++it) {
    std::string n = it->at("id").get<std::string>();
    std::error_code ec;
    if (fs::exists(s.dir / "runs" / n / "graph.json", ec) && !is_active_status(it->at("status").get<std::string>())) {
      return n;
    }
  }
  throw Error(ErrorCode::MissingGraph, "no finished run with a state graph");
}

// ---------------------------------------------------------------------------
// Digests

std::string Service::start_digest(const std::string& id, const Json& body) {
  auto s = session(id);
  std::unique_lock lock(s->mutex);
  DigestRequest request;
  request.spec_text = read_file(s->dir / "spec.tla");
  request.cfg_text = read_file(s->dir / "model.cfg");
  if (trim(request.spec_text).empty()) throw Error(ErrorCode::SpecMissing, "session has no spec");
  if (s->active_digest) throw Error(ErrorCode::ConcurrentRun, "digest " + *s->active_digest + " is still running");
  const Json empty = Json::object();
  const Json& b = body.is_object() ? body : empty;
  if (b.contains("run_id") && !b["run_id"].is_null()) {
    request.run_id = b["run_id"].is_string() ? b["run_id"].get<std::string>() : b["run_id"].dump();
    if (!find_entry(s->doc["runs"], request.run_id)) throw Error(ErrorCode::UnknownRun, "no run " + request.run_id);
    std::error_code ec;
    if (!fs::exists(s->dir / "runs" / request.run_id / "graph.json", ec)) {
      throw Error(ErrorCode::MissingGraph, "run " + request.run_id + " has no state graph");
    }
  } else {
    request.run_id = latest_graph_run(*s);
  }
  request.selection = parse_selection(b.value("selection", Json(nullptr)));
  if (request.selection) selection_excerpt(request.spec_text, *request.selection);
  LlmConfig llm = llm_config_for(*s, b.value("llm", Json(nullptr)));

  std::string n = std::to_string(s->doc["digests"].size() + 1);
  Json entry;
  entry["id"] = n;
  entry["status"] = "running";
  entry["run_id"] = request.run_id;
  s->doc["digests"].push_back(entry);
  save_session_locked(*s);
  s->active_digest = n;
  lock.unlock();

  spawn([this, s, n, request, llm] {
    Json doc;
    doc["id"] = n;
    std::string status = "done";
    try {
      auto loaded = loaded_run(*s, request.run_id);
      DigestReport report = run_digest(request, &loaded->graph, llm, *s->client, config_.clock);
      doc["status"] = status;
      Json body = digest_report_to_json(report);
      for (auto& [k, v] : body.items()) doc[k] = v;
    } catch (const Error& e) {
      status = "failed";
      doc["status"] = status;
      doc["error"] = error_body(e.code(), e.what());
    } catch (const std::exception& e) {
      status = "failed";
      doc["status"] = status;
      doc["error"] = error_body(ErrorCode::IoFailure, e.what());
    }
    std::lock_guard guard(s->mutex);
    try {
      write_json(s->dir / "digest" / (n + ".json"), doc);
      (*find_entry(s->doc["digests"], n))["status"] = status;
      save_session_locked(*s);
    } catch (const Error&) {
    }
    s->active_digest.reset();
    s->changed.notify_all();
  });
  return n;
}

Json Service::get_digest(const std::string& id, const std::string& digest) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  Json* entry = find_entry(s->doc["digests"], digest);
  if (!entry) throw Error(ErrorCode::UnknownDigest, "no digest " + digest);
  if ((*entry)["status"] == "running") {
    Json doc;
    doc["id"] = digest;
    doc["status"] = "running";
    return doc;
  }
  return read_json(s->dir / "digest" / (digest + ".json"));
}

Json Service::wait_digest(const std::string& id, const std::string& digest) {
  auto s = session(id);
  {
    std::unique_lock lock(s->mutex);
    if (!find_entry(s->doc["digests"], digest)) throw Error(ErrorCode::UnknownDigest, "no digest " + digest);
    s->changed.wait(lock, [&] { return (*find_entry(s->doc["digests"], digest))["status"] != "running"; });
  }
  return get_digest(id, digest);
}

// ---------------------------------------------------------------------------
// Repairs

namespace {

Json read_attempts(const fs::path& dir) {
  Json attempts = Json::array();
  std::error_code ec;
  for (int i = 1;; ++i) {
    auto path = dir / (std::to_string(i) + ".json");
    if (!fs::exists(path, ec)) break;
    attempts.push_back(read_json(path));
  }
  return attempts;
}

}  // namespace

std::string Service::start_repair(const std::string& id, const Json& body) {
  auto s = session(id);
  const Json empty = Json::object();
  const Json& b = body.is_object() ? body : empty;
  auto mode = repair_mode_from_name(b.value("mode", "single_pass"));
  if (!mode) throw Error(ErrorCode::InvalidArgument, "mode must be single_pass or multi_pass");
  int max_passes = 5;
  if (b.contains("max_passes") && !b["max_passes"].is_null()) {
    if (!b["max_passes"].is_number_integer()) throw Error(ErrorCode::InvalidArgument, "max_passes must be an integer");
    max_passes = b["max_passes"].get<int>();
  }
  if (max_passes < 1) throw Error(ErrorCode::InvalidArgument, "max_passes must be positive");
  bool detect_no_progress = b.value("detect_no_progress", true);

  std::unique_lock lock(s->mutex);
  std::string spec = read_file(s->dir / "spec.tla");
  std::string cfg = read_file(s->dir / "model.cfg");
  if (trim(spec).empty() || trim(cfg).empty()) throw Error(ErrorCode::SpecMissing, "session has no spec or cfg");
  if (s->active_repair) throw Error(ErrorCode::ConcurrentRepair, "repair " + *s->active_repair + " is still running");
  LlmConfig llm = llm_config_for(*s, b.value("llm", Json(nullptr)));
  RunOptions options = options_from_json(s->doc["run_options"], config_.default_options);
  std::string spec_hash = sha256_hex(spec);

  // A single pass starts from the newest finished run of the current spec.
  std::optional<TlcRunResult> base;
  std::optional<std::string> base_run;
  if (*mode == RepairMode::SinglePass) {
    const Json& runs = s->doc["runs"];
    for (auto it = runs.rbegin(); it != runs.rend(); ++it) {
      std::string status = it->at("status").get<std::string>();
      if (it->value("spec_hash", "") != spec_hash || (status != "done" && status != "timeout")) continue;
      base_run = it->at("id").get<std::string>();
      base = run_result_from_json(read_json(s->dir / "runs" / *base_run / "result.json"));
      if (!base->error) throw Error(ErrorCode::NoError, "run " + *base_run + " of the current spec is clean");
      break;
    }
  } else {
    runner_.check_runtime();
  }
  if (!base) runner_.check_runtime();

  std::string r = std::to_string(s->doc["repairs"].size() + 1);
  auto dir = s->dir / "repair" / r;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  store_blob(s->dir, spec);

  Json status;
  status["id"] = r;
  status["mode"] = std::string(repair_mode_name(*mode));
  status["max_passes"] = *mode == RepairMode::SinglePass ? 1 : max_passes;
  status["state"] = "running";
  status["final_status"] = nullptr;
  status["error"] = nullptr;
  status["original_spec_hash"] = spec_hash;
  status["final_spec_hash"] = nullptr;
  status["attempt_count"] = 0;
  status["checker_runs"] = 0;
  status["base_run"] = base_run ? Json(*base_run) : Json(nullptr);
  status["proposal_pending"] = false;
  status["accepted"] = false;
  status["accepted_run"] = nullptr;
  write_json(dir / "status.json", status);

  Json entry;
  entry["id"] = r;
  entry["mode"] = status["mode"];
  entry["status"] = "running";
  s->doc["repairs"].push_back(entry);
  save_session_locked(*s);
  s->active_repair = r;
  s->repair_cancel = std::make_shared<std::atomic<bool>>(false);
  auto cancel = s->repair_cancel;
  lock.unlock();

  spawn([this, s, r, dir, mode = *mode, max_passes, detect_no_progress, llm, options, spec, cfg, base, cancel,
         status]() mutable {
    int check_counter = 0;
    auto check = [&](const std::string& candidate, const std::string& candidate_cfg) {
      std::string k = std::to_string(check_counter++);
      std::string key = s->id + "/repair/" + r + "/" + k;
      auto ws = prepare_workspace_at(dir / "checks" / k, key, candidate, candidate_cfg);
      runner_.register_workspace(ws);
      {
        std::lock_guard guard(s->mutex);
        s->repair_check_key = key;
      }
      if (*cancel) runner_.cancel_run(key);
      TlcRunResult result = runner_.run_check(ws, options);
      std::lock_guard guard(s->mutex);
      s->repair_check_key.clear();
      return result;
    };
    auto update_status = [&](auto&& mutate) {
      std::lock_guard guard(s->mutex);
      mutate(status);
      write_json(dir / "status.json", status);
    };
    auto persist = [&](const RepairAttempt& a) {
      write_file_exclusive(dir / (std::to_string(a.index) + ".json"), to_text(repair_attempt_to_json(a)));
      if (a.patched_spec) store_blob(s->dir, *a.patched_spec);
      update_status([&](Json& st) { st["attempt_count"] = a.index; });
    };

    std::string summary_status;
    try {
      if (mode == RepairMode::SinglePass) {
        TlcRunResult result = base ? *base : check(spec, cfg);
        int runs = base ? 0 : 1;
        if (!result.error) {
          update_status([&](Json& st) {
            st["checker_runs"] = runs;
            st["final_status"] = "success";
            st["final_spec_hash"] = sha256_hex(spec);
          });
          summary_status = "success";
        } else {
          RepairAttempt attempt = single_pass(spec, cfg, result, llm, *s->client);
          persist(attempt);
          bool applied = attempt.patch_status == PatchStatus::Applied;
          update_status([&](Json& st) {
            st["checker_runs"] = runs;
            st["proposal_pending"] = applied;
            st["final_status"] = applied ? Json(nullptr) : Json("patch_failed");
          });
          summary_status = applied ? "proposal" : "patch_failed";
        }
      } else {
        MultiPassHooks hooks;
        hooks.check = check;
        hooks.persist_attempt = persist;
        hooks.cancel = cancel.get();
        hooks.detect_no_progress = detect_no_progress;
        RepairSession session = multi_pass(spec, cfg, max_passes, llm, *s->client, hooks);
        summary_status = std::string(final_status_name(*session.final_status));
        update_status([&](Json& st) {
          st["checker_runs"] = session.checker_runs;
          st["final_status"] = summary_status;
          if (session.error) st["error"] = error_body(session.error->first, session.error->second);
          if (session.final_spec) {
            st["final_spec_hash"] = sha256_hex(*session.final_spec);
            store_blob(s->dir, *session.final_spec);
          }
        });
      }
    } catch (const Error& e) {
      summary_status = "aborted";
      try {
        update_status([&](Json& st) {
          st["final_status"] = "aborted";
          st["error"] = error_body(e.code(), e.what());
        });
      } catch (const Error&) {
      }
    }
    std::lock_guard guard(s->mutex);
    try {
      status["state"] = "finished";
      write_json(dir / "status.json", status);
      (*find_entry(s->doc["repairs"], r))["status"] = summary_status;
      save_session_locked(*s);
    } catch (const Error&) {
    }
    s->active_repair.reset();
    s->repair_cancel.reset();
    s->changed.notify_all();
  });
  return r;
}

Json Service::get_repair(const std::string& id, const std::string& repair) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (!find_entry(s->doc["repairs"], repair)) throw Error(ErrorCode::UnknownRepair, "no repair " + repair);
  auto dir = s->dir / "repair" / repair;
  Json doc = read_json(dir / "status.json");
  doc["attempts"] = read_attempts(dir);
  return doc;
}

Json Service::wait_repair(const std::string& id, const std::string& repair) {
  auto s = session(id);
  {
    std::unique_lock lock(s->mutex);
    if (!find_entry(s->doc["repairs"], repair)) throw Error(ErrorCode::UnknownRepair, "no repair " + repair);
    s->changed.wait(lock, [&] { return (*find_entry(s->doc["repairs"], repair))["status"] != "running"; });
  }
  return get_repair(id, repair);
}

Json Service::accept_repair(const std::string& id, const std::string& repair, const Json& body) {
  auto s = session(id);
  bool recheck = body.is_object() && body.value("recheck", false);
  std::string spec_hash;
  {
    std::lock_guard lock(s->mutex);
    if (!find_entry(s->doc["repairs"], repair)) throw Error(ErrorCode::UnknownRepair, "no repair " + repair);
    auto dir = s->dir / "repair" / repair;
    Json status = read_json(dir / "status.json");
    if (status["mode"] != "single_pass" || status["state"] != "finished" || !status["proposal_pending"].get<bool>()) {
      throw Error(ErrorCode::NotAProposal, "repair " + repair + " has no pending proposal");
    }
    Json attempt = read_json(dir / "1.json");
    std::string patched = attempt.at("patched_spec").get<std::string>();
    write_file_atomic(s->dir / "spec.tla", patched);
    store_blob(s->dir, patched);
    spec_hash = sha256_hex(patched);
    s->doc["spec_hash"] = spec_hash;
    status["proposal_pending"] = false;
    status["accepted"] = true;
    write_json(dir / "status.json", status);
    (*find_entry(s->doc["repairs"], repair))["status"] = "accepted";
    save_session_locked(*s);
  }
  Json doc;
  doc["spec_hash"] = spec_hash;
  doc["run_id"] = nullptr;
  if (recheck) {
    std::string run = start_check(id);
    doc["run_id"] = run;
    std::lock_guard lock(s->mutex);
    auto path = s->dir / "repair" / repair / "status.json";
    Json status = read_json(path);
    status["accepted_run"] = run;
    write_json(path, status);
  }
  return doc;
}

Json Service::cancel_repair(const std::string& id, const std::string& repair) {
  auto s = session(id);
  std::lock_guard lock(s->mutex);
  if (!find_entry(s->doc["repairs"], repair)) throw Error(ErrorCode::UnknownRepair, "no repair " + repair);
  Json doc;
  doc["repair_id"] = repair;
  bool active = s->active_repair == repair;
  if (active) {
    *s->repair_cancel = true;
    if (!s->repair_check_key.empty()) {
      try {
        runner_.cancel_run(s->repair_check_key);
      } catch (const Error&) {
      }
    }
  }
  doc["cancelled"] = active;
  return doc;
}

}  // namespace twb
