#include "twb/cli.hpp"

#include <csignal>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "twb/documents.hpp"
#include "twb/error.hpp"
#include "twb/http_api.hpp"
#include "twb/io.hpp"
#include "twb/service.hpp"

namespace twb {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string spec;
  std::string config;
  std::string tlc_jar;
  int timeout = 600;
  int workers = 1;
  bool deadlock = false;
  bool json = false;
  std::string dump_graph;
  std::string format = "json";
  bool compact = false;
  bool clusters = false;
  std::string select;
  std::string mode = "single";
  int max_passes = 5;
  bool apply = false;
  int port = 8080;
  std::string data;
};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A data directory that disappears with the invocation unless --data was given.
class Scratch {
 public:
  explicit Scratch(const std::string& data) {
    if (!data.empty()) {
      dir_ = data;
      return;
    }
    dir_ = fs::temp_directory_path() / ("twb-cli-" + random_token(8));
    owned_ = true;
  }
  ~Scratch() {
    std::error_code ec;
    if (owned_) fs::remove_all(dir_, ec);
  }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  bool owned_ = false;
};

ServiceConfig service_config(const Flags& flags, const fs::path& data_dir) {
  ServiceConfig config;
  config.data_dir = data_dir;
  if (!flags.tlc_jar.empty()) config.runner.tlc_jar = flags.tlc_jar;
  config.default_options = RunOptions::make(flags.timeout, flags.workers, flags.deadlock);
  return config;
}

std::string load_input(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw UsageError(std::string(flag) + ": no such file " + path);
  return read_file(path);
}

// Creates a session holding the inputs and waits for one check.
Json check_in_session(Service& service, const std::string& session, const Flags& flags, std::string& run) {
  service.put_spec(session, load_input(flags.spec, "--spec"), load_input(flags.config, "--config"));
  run = service.start_check(session);
  return service.wait_run(session, run);
}

bool result_clean(const Json& result) {
  return result.at("status") == "done" && result.at("error").is_null() && result.at("exit_status") == 0;
}

void print_result_text(const Json& result, std::ostream& out) {
  const Json& stats = result.at("stats");
  out << "status: " << result.at("status").get<std::string>() << " (exit " << result.at("exit_status") << ", "
      << result.at("wall_time_ms") << " ms)\n";
  out << "states: " << stats.at("distinct_states") << " distinct, " << stats.at("states_generated")
      << " generated, depth " << stats.at("depth") << "\n";
  if (result.contains("failure") && !result["failure"].is_null()) {
    out << "failure: " << result["failure"].at("code").get<std::string>() << ": "
        << result["failure"].at("message").get<std::string>() << "\n";
  }
  const Json& error = result.at("error");
  if (error.is_null()) {
    out << "no errors found\n";
    return;
  }
  out << error.at("category").get<std::string>();
  if (!error.at("property_name").is_null()) out << ": " << error.at("property_name").get<std::string>();
  out << "\n" << error.at("message").get<std::string>() << "\n";
  if (!error.at("trace").is_null()) {
    for (const auto& state : error["trace"].at("states")) {
      out << "  " << state.at("index") << ". " << state.at("action").get<std::string>() << "\n";
      for (const auto& [name, value] : state.at("vars").items()) {
        out << "       " << name << " = " << value.get<std::string>() << "\n";
      }
    }
  }
}

int cmd_check(const Flags& flags, std::ostream& out) {
  Scratch scratch(flags.data);
  Service service(service_config(flags, scratch.dir()));
  std::string session = service.create_session();
  std::string run;
  Json result = check_in_session(service, session, flags, run);
  if (!flags.dump_graph.empty() && result.value("graph_available", false)) {
    write_file_atomic(flags.dump_graph, to_text(service.graph_document(session, run)));
  }
  if (flags.json) {
    out << to_text(result);
  } else {
    print_result_text(result, out);
  }
  return result_clean(result) ? kExitClean : kExitViolation;
}

int cmd_graph(const Flags& flags, std::ostream& out, std::ostream& err) {
  if (flags.format != "json" && flags.format != "dot") throw UsageError("--format must be json or dot");
  if ((flags.compact || flags.clusters) && flags.format != "json") {
    throw UsageError("--compact and --clusters need --format json");
  }
  if (flags.compact && flags.clusters) throw UsageError("--compact and --clusters are exclusive");
  Scratch scratch(flags.data);
  Service service(service_config(flags, scratch.dir()));
  std::string session = service.create_session();
  std::string run;
  Json result = check_in_session(service, session, flags, run);
  if (!result.value("graph_available", false)) {
    err << "no state graph: " << to_text(result.at("failure").is_null() ? result.at("error") : result.at("failure"));
    return kExitViolation;
  }
  StateGraph graph = service.load_graph(session, run);
  if (flags.format == "dot") {
    out << graph_to_dot(graph);
  } else if (flags.compact) {
    out << to_text(compacted_to_json(compact_chains(graph)));
  } else if (flags.clusters) {
    out << to_text(clusters_to_json(cluster_homogeneous(graph)));
  } else {
    out << to_text(graph_to_json(graph));
  }
  return result_clean(result) ? kExitClean : kExitViolation;
}

int cmd_digest(const Flags& flags, std::ostream& out, std::ostream& err) {
  Scratch scratch(flags.data);
  Service service(service_config(flags, scratch.dir()));
  std::string session = service.create_session();
  std::string run;
  Json result = check_in_session(service, session, flags, run);
  Json body;
  body["run_id"] = run;
  if (!flags.select.empty()) body["selection"] = flags.select;
  std::string digest = service.start_digest(session, body);
  Json report = service.wait_digest(session, digest);
  if (report.at("status") != "done") {
    err << "digest failed: " << to_text(report.at("error"));
    return kExitViolation;
  }
  if (flags.json) {
    out << to_text(report);
    return kExitClean;
  }
  if (!report.at("selection_echo").is_null()) {
    out << "Selected lines:\n" << report["selection_echo"].get<std::string>() << "\n";
  }
  for (const auto& [name, text] : report.at("explanation").items()) {
    std::string heading = name;
    heading[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(heading[0])));
    out << "## " << heading << "\n\n" << text.get<std::string>() << "\n\n";
  }
  return kExitClean;
}

int cmd_repair(const Flags& flags, std::ostream& out, std::ostream& err) {
  Scratch scratch(flags.data);
  fs::path data = scratch.dir();
  Service service(service_config(flags, data));
  std::string session = service.create_session();
  std::string spec = load_input(flags.spec, "--spec");
  service.put_spec(session, spec, load_input(flags.config, "--config"));
  Json body;
  body["mode"] = flags.mode;
  body["max_passes"] = flags.max_passes;
  std::string repair = service.start_repair(session, body);
  Json doc = service.wait_repair(session, repair);

  std::optional<std::string> repaired;
  if (doc.at("final_status") == "success" && doc.at("final_spec_hash").is_string() &&
      doc["final_spec_hash"] != doc.at("original_spec_hash")) {
    repaired = read_file(data / "sessions" / session / "blobs" / doc["final_spec_hash"].get<std::string>());
  } else if (doc.value("proposal_pending", false)) {
    repaired = doc.at("attempts").at(0).at("patched_spec").get<std::string>();
  }
  if (flags.apply && repaired) write_file_atomic(flags.spec, *repaired);

  if (flags.json) {
    out << to_text(doc);
  } else {
    out << "repair " << doc.at("mode").get<std::string>() << ": "
        << (doc.at("final_status").is_null() ? std::string("proposal") : doc["final_status"].get<std::string>())
        << " after " << doc.at("attempt_count") << " attempt(s), " << doc.at("checker_runs") << " checker run(s)\n";
    if (!doc.at("error").is_null()) err << "error: " << to_text(doc["error"]);
    if (repaired) out << (flags.apply ? "wrote " + flags.spec + "\n" : std::string("--apply writes it back\n"));
    if (repaired && !flags.apply) out << *repaired;
  }
  bool ok = doc.at("final_status") == "success" || doc.value("proposal_pending", false);
  return ok ? kExitClean : kExitViolation;
}

int cmd_serve(const Flags& flags, std::ostream& out) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  fs::path data = flags.data.empty() ? fs::path("twb-data") : fs::path(flags.data);
  Service service(service_config(flags, data));
  ApiServer server(service, "127.0.0.1", flags.port);
  out << "listening on http://127.0.0.1:" << server.port() << "/api (data in " << data.string() << ")"
      << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitClean;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Flags flags;
  CLI::App app{"TLA+ model checking workbench"};
  app.require_subcommand(1);

  auto add_inputs = [&](CLI::App* cmd) {
    cmd->add_option("--spec", flags.spec, "TLA+ module")->required();
    cmd->add_option("--config", flags.config, "TLC model configuration")->required();
    cmd->add_option("--tlc-jar", flags.tlc_jar, "tla2tools.jar (default $MW_TLC_JAR)");
    cmd->add_option("--timeout", flags.timeout, "checker timeout in seconds")->check(CLI::PositiveNumber);
    cmd->add_option("--workers", flags.workers, "checker worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--deadlock", flags.deadlock, "report states without successors as deadlocks");
    cmd->add_option("--data", flags.data, "keep session data in this directory");
  };

  auto* check = app.add_subcommand("check", "run the model checker");
  add_inputs(check);
  check->add_flag("--json", flags.json, "print the result document");
  check->add_option("--dump-graph", flags.dump_graph, "write the canonical graph document here");

  auto* graph = app.add_subcommand("graph", "print the state graph");
  add_inputs(graph);
  graph->add_option("--format", flags.format, "json or dot")->check(CLI::IsMember({"json", "dot"}));
  graph->add_flag("--compact", flags.compact, "collapse pass-through chains");
  graph->add_flag("--clusters", flags.clusters, "group structurally equivalent states");

  auto* digest = app.add_subcommand("digest", "explain the model with the configured LLM");
  add_inputs(digest);
  digest->add_flag("--json", flags.json, "print the report document");
  digest->add_option("--select", flags.select, "focus on lines L1:L2");

  auto* repair = app.add_subcommand("repair", "repair a failing spec with the configured LLM");
  add_inputs(repair);
  repair->add_flag("--json", flags.json, "print the repair document");
  repair->add_option("--mode", flags.mode, "single or multi")->check(CLI::IsMember({"single", "multi"}));
  repair->add_option("--max-passes", flags.max_passes, "attempt limit for multi")->check(CLI::PositiveNumber);
  repair->add_flag("--apply", flags.apply, "write the repaired spec back to --spec");

  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  serve->add_option("--port", flags.port, "listen port")->check(CLI::Range(0, 65535));
  serve->add_option("--data", flags.data, "data directory (default ./twb-data)");
  serve->add_option("--tlc-jar", flags.tlc_jar, "tla2tools.jar (default $MW_TLC_JAR)");
  serve->add_option("--timeout", flags.timeout, "default checker timeout")->check(CLI::PositiveNumber);
  serve->add_option("--workers", flags.workers, "default worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitClean;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitClean;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (check->parsed()) return cmd_check(flags, out);
    if (graph->parsed()) return cmd_graph(flags, out, err);
    if (digest->parsed()) return cmd_digest(flags, out, err);
    if (repair->parsed()) return cmd_repair(flags, out, err);
    return cmd_serve(flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << code_name(e.code()) << ": " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::RuntimeMissing:
        return kExitEnvironment;
      case ErrorCode::InvalidArgument:
      case ErrorCode::SelectionOutOfRange:
      case ErrorCode::MissingModuleHeader:
      case ErrorCode::SpecMissing:
      case ErrorCode::InvalidConfig:
        return kExitUsage;
      default:
        return kExitViolation;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitViolation;
  }
}

}  // namespace twb
