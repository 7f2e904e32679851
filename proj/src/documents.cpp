#include "twb/documents.hpp"

#include <set>

namespace twb {

namespace {

Fingerprint parse_id(const Json& value) {
  if (!value.is_string()) throw Error(ErrorCode::InvalidArgument, "node id must be a string");
  auto fp = Fingerprint::parse(value.get<std::string>());
  if (!fp) throw Error(ErrorCode::InvalidArgument, "node id is not a 64-bit integer: " + value.get<std::string>());
  return *fp;
}

Json bindings_to_json(const Bindings& bindings) {
  Json vars = Json::object();
  for (const auto& [name, value] : bindings) vars[name] = value;
  return vars;
}

Bindings bindings_from_json(const Json& doc) {
  Bindings out;
  for (const auto& [name, value] : doc.items()) out[name] = value.get<std::string>();
  return out;
}

Json ids_to_json(const std::vector<Fingerprint>& ids) {
  Json out = Json::array();
  for (auto id : ids) out.push_back(id.str());
  return out;
}

Json node_fields(Json out, const StateNode& node) {
  out["vars"] = bindings_to_json(node.bindings);
  out["initial"] = node.is_initial;
  out["terminal"] = node.is_terminal;
  out["violating"] = node.is_violating;
  out["violated"] = node.violated_properties;
  return out;
}

std::string dot_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

template <typename T>
T get_or(const Json& doc, const char* key, T fallback) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return fallback;
  return it->template get<T>();
}

}  // namespace

std::string to_text(const Json& doc) { return doc.dump(2) + "\n"; }

Json graph_to_json(const StateGraph& graph) {
  Json doc;
  Json nodes = Json::array();
  for (const auto& [id, node] : graph.nodes) {
    Json n;
    n["id"] = id.str();
    nodes.push_back(node_fields(std::move(n), node));
  }
  Json edges = Json::array();
  for (const auto& e : graph.edges) {
    Json edge;
    edge["from"] = e.from.str();
    edge["to"] = e.to.str();
    edge["action"] = e.action;
    edges.push_back(std::move(edge));
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  doc["initial"] = ids_to_json(graph.initial_ids);
  return doc;
}

std::vector<std::string> graph_schema_problems(const Json& doc) {
  std::vector<std::string> problems;
  auto expect_keys = [&](const Json& obj, std::vector<std::string> keys, const std::string& where) {
    if (!obj.is_object()) {
      problems.push_back(where + ": not an object");
      return false;
    }
    std::vector<std::string> actual;
    for (const auto& [k, v] : obj.items()) actual.push_back(k);
    if (actual != keys) {
      std::string want;
      for (const auto& k : keys) want += (want.empty() ? "" : ",") + k;
      problems.push_back(where + ": expected fields [" + want + "] in this order");
      return false;
    }
    return true;
  };
  auto valid_id = [](const Json& v) { return v.is_string() && Fingerprint::parse(v.get<std::string>()); };

  if (!expect_keys(doc, {"nodes", "edges", "initial"}, "document")) return problems;
  if (!doc["nodes"].is_array() || !doc["edges"].is_array() || !doc["initial"].is_array()) {
    problems.push_back("document: nodes, edges and initial must be arrays");
    return problems;
  }
  std::set<std::string> ids;
  std::map<std::string, bool> terminal_flag;
  for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
    const Json& n = doc["nodes"][i];
    std::string where = "nodes[" + std::to_string(i) + "]";
    if (!expect_keys(n, {"id", "vars", "initial", "terminal", "violating", "violated"}, where)) continue;
    if (!valid_id(n["id"])) problems.push_back(where + ".id: not a decimal 64-bit integer string");
    else if (!ids.insert(n["id"].get<std::string>()).second) problems.push_back(where + ".id: duplicate");
    if (!n["vars"].is_object()) {
      problems.push_back(where + ".vars: not an object");
    } else {
      for (const auto& [k, v] : n["vars"].items()) {
        if (!v.is_string()) problems.push_back(where + ".vars." + k + ": not a string");
      }
    }
    for (const char* flag : {"initial", "terminal", "violating"}) {
      if (!n[flag].is_boolean()) problems.push_back(where + "." + flag + ": not a boolean");
    }
    if (!n["violated"].is_array()) {
      problems.push_back(where + ".violated: not an array");
    } else {
      for (const auto& p : n["violated"]) {
        if (!p.is_string()) problems.push_back(where + ".violated: non-string entry");
      }
    }
    if (n["id"].is_string() && n["terminal"].is_boolean()) {
      terminal_flag[n["id"].get<std::string>()] = n["terminal"].get<bool>();
    }
  }
  std::set<std::string> has_out;
  for (std::size_t i = 0; i < doc["edges"].size(); ++i) {
    const Json& e = doc["edges"][i];
    std::string where = "edges[" + std::to_string(i) + "]";
    if (!expect_keys(e, {"from", "to", "action"}, where)) continue;
    for (const char* end : {"from", "to"}) {
      if (!valid_id(e[end])) problems.push_back(where + "." + end + ": not a node id");
      else if (!ids.contains(e[end].get<std::string>())) problems.push_back(where + "." + end + ": unknown node");
    }
    if (!e["action"].is_string()) problems.push_back(where + ".action: not a string");
    if (e["from"].is_string()) has_out.insert(e["from"].get<std::string>());
  }
  for (const auto& id : doc["initial"]) {
    if (!id.is_string() || !ids.contains(id.get<std::string>())) problems.push_back("initial: unknown node");
  }
  for (const auto& [id, terminal] : terminal_flag) {
    if (terminal == has_out.contains(id)) problems.push_back("node " + id + ": terminal flag disagrees with edges");
  }
  return problems;
}

StateGraph graph_from_json(const Json& doc) {
  StateGraph graph;
  try {
    for (const auto& n : doc.at("nodes")) {
      StateNode node;
      node.bindings = bindings_from_json(n.at("vars"));
      node.is_initial = n.at("initial").get<bool>();
      node.is_terminal = n.at("terminal").get<bool>();
      node.is_violating = n.at("violating").get<bool>();
      node.violated_properties = n.at("violated").get<std::vector<std::string>>();
      if (!graph.nodes.emplace(parse_id(n.at("id")), std::move(node)).second) {
        throw Error(ErrorCode::InvalidArgument, "duplicate node id " + n.at("id").get<std::string>());
      }
    }
    for (const auto& e : doc.at("edges")) {
      Edge edge{parse_id(e.at("from")), parse_id(e.at("to")), e.at("action").get<std::string>()};
      if (!graph.contains(edge.from) || !graph.contains(edge.to)) {
        throw Error(ErrorCode::InvalidArgument, "edge references an unknown node");
      }
      graph.edges.push_back(std::move(edge));
    }
    for (const auto& id : doc.at("initial")) {
      auto fp = parse_id(id);
      if (!graph.contains(fp)) throw Error(ErrorCode::InvalidArgument, "initial id is not a node");
      graph.initial_ids.push_back(fp);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed graph document: ") + e.what());
  }
  return graph;
}

Json location_to_json(const SourceLocation& location) {
  Json doc;
  doc["module"] = location.module;
  doc["start_line"] = location.start_line;
  doc["start_col"] = location.start_col;
  doc["end_line"] = location.end_line;
  doc["end_col"] = location.end_col;
  return doc;
}

SourceLocation location_from_json(const Json& doc) {
  return make_location(doc.at("module").get<std::string>(), doc.at("start_line").get<int>(),
                       doc.at("start_col").get<int>(), doc.at("end_line").get<int>(), doc.at("end_col").get<int>());
}

Json trace_to_json(const CounterexampleTrace& trace) {
  Json doc;
  Json states = Json::array();
  for (const auto& s : trace.states) {
    Json state;
    state["index"] = s.index;
    state["action"] = s.action_label;
    state["location"] = s.action_location ? location_to_json(*s.action_location) : Json(nullptr);
    state["vars"] = bindings_to_json(s.bindings);
    states.push_back(std::move(state));
  }
  doc["states"] = std::move(states);
  doc["lasso_start"] = trace.lasso_start ? Json(*trace.lasso_start) : Json(nullptr);
  return doc;
}

CounterexampleTrace trace_from_json(const Json& doc) {
  CounterexampleTrace trace;
  for (const auto& s : doc.at("states")) {
    TraceState state;
    state.index = s.at("index").get<int>();
    state.action_label = s.at("action").get<std::string>();
    if (auto it = s.find("location"); it != s.end() && !it->is_null()) state.action_location = location_from_json(*it);
    state.bindings = bindings_from_json(s.at("vars"));
    trace.states.push_back(std::move(state));
  }
  if (auto it = doc.find("lasso_start"); it != doc.end() && !it->is_null()) trace.lasso_start = it->get<int>();
  return trace;
}

Json tlc_error_to_json(const TlcError& error) {
  Json doc;
  doc["category"] = std::string(category_name(error.category));
  doc["property_name"] = error.property_name ? Json(*error.property_name) : Json(nullptr);
  doc["message"] = error.message;
  Json locations = Json::array();
  for (const auto& l : error.locations) locations.push_back(location_to_json(l));
  doc["locations"] = std::move(locations);
  doc["trace"] = error.trace ? trace_to_json(*error.trace) : Json(nullptr);
  return doc;
}

TlcError tlc_error_from_json(const Json& doc) {
  TlcError error;
  auto category = category_from_name(doc.at("category").get<std::string>());
  if (!category) throw Error(ErrorCode::InvalidArgument, "unknown error category");
  error.category = *category;
  if (auto it = doc.find("property_name"); it != doc.end() && !it->is_null()) {
    error.property_name = it->get<std::string>();
  }
  error.message = doc.at("message").get<std::string>();
  for (const auto& l : doc.at("locations")) error.locations.push_back(location_from_json(l));
  if (auto it = doc.find("trace"); it != doc.end() && !it->is_null()) error.trace = trace_from_json(*it);
  return error;
}

Json stats_to_json(const RunStats& stats) {
  Json doc;
  doc["states_generated"] = stats.states_generated;
  doc["distinct_states"] = stats.distinct_states;
  doc["depth"] = stats.depth;
  doc["populated"] = stats.populated;
  return doc;
}

RunStats stats_from_json(const Json& doc) {
  RunStats stats;
  stats.states_generated = doc.at("states_generated").get<std::uint64_t>();
  stats.distinct_states = doc.at("distinct_states").get<std::uint64_t>();
  stats.depth = doc.at("depth").get<std::uint64_t>();
  stats.populated = get_or(doc, "populated", true);
  return stats;
}

Json options_to_json(const RunOptions& options) {
  Json doc;
  doc["timeout_seconds"] = options.timeout_seconds;
  doc["worker_count"] = options.worker_count;
  doc["deadlock_check"] = options.deadlock_check;
  doc["dump_graph"] = options.dump_graph;
  doc["extra_flags"] = options.extra_flags;
  return doc;
}

RunOptions options_from_json(const Json& doc, RunOptions base) {
  if (doc.is_null()) return base;
  if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "options must be an object");
  try {
    base.timeout_seconds = get_or(doc, "timeout_seconds", base.timeout_seconds);
    base.worker_count = get_or(doc, "worker_count", base.worker_count);
    base.deadlock_check = get_or(doc, "deadlock_check", base.deadlock_check);
    base.dump_graph = get_or(doc, "dump_graph", base.dump_graph);
    base.extra_flags = get_or(doc, "extra_flags", base.extra_flags);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad run options: ") + e.what());
  }
  base.validate();
  return base;
}

Json run_result_to_json(const TlcRunResult& result) {
  Json doc;
  doc["run_id"] = result.run_id;
  doc["status"] = std::string(run_status_name(result.status));
  doc["exit_status"] = result.exit_status;
  doc["wall_time_ms"] = result.wall_time_ms;
  doc["stats"] = stats_to_json(result.stats);
  doc["error"] = result.error ? tlc_error_to_json(*result.error) : Json(nullptr);
  doc["graph_available"] = result.graph.has_value();
  Json messages = Json::array();
  for (const auto& m : result.messages) {
    Json msg;
    msg["code"] = m.code;
    msg["severity"] = m.severity;
    msg["body"] = m.body;
    messages.push_back(std::move(msg));
  }
  doc["messages"] = std::move(messages);
  return doc;
}

TlcRunResult run_result_from_json(const Json& doc) {
  TlcRunResult result;
  try {
    result.run_id = doc.at("run_id").get<std::string>();
    auto status = run_status_from_name(doc.at("status").get<std::string>());
    if (!status) throw Error(ErrorCode::InvalidArgument, "unknown run status");
    result.status = *status;
    result.exit_status = doc.at("exit_status").get<int>();
    result.wall_time_ms = doc.at("wall_time_ms").get<std::int64_t>();
    result.stats = stats_from_json(doc.at("stats"));
    if (!doc.at("error").is_null()) result.error = tlc_error_from_json(doc.at("error"));
    for (const auto& m : doc.at("messages")) {
      result.messages.push_back({m.at("code").get<int>(), m.at("severity").get<int>(), m.at("body").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed run result: ") + e.what());
  }
  return result;
}

Json summary_to_json(const StructuralSummary& summary, SummaryLimits limits) {
  auto states = [](const std::vector<SummaryState>& list) {
    Json out = Json::array();
    for (const auto& s : list) {
      Json state;
      state["id"] = s.id.str();
      state["state"] = render_state_inline(s.bindings);
      state["vars"] = bindings_to_json(s.bindings);
      out.push_back(std::move(state));
    }
    return out;
  };
  Json doc;
  doc["node_count"] = summary.node_count;
  doc["edge_count"] = summary.edge_count;
  doc["initial_states"] = states(summary.initial_states);
  doc["terminal_states"] = states(summary.terminal_states);
  Json cycles = Json::array();
  for (std::size_t i = 0; i < summary.cycles.size() && i < limits.max_cycles; ++i) {
    const auto& nodes = summary.cycles[i].nodes;
    Json cycle;
    cycle["length"] = nodes.size();
    std::vector<Fingerprint> shown(nodes.begin(), nodes.begin() + std::min(nodes.size(), limits.max_cycle_length));
    cycle["nodes"] = ids_to_json(shown);
    cycle["truncated"] = shown.size() < nodes.size();
    cycles.push_back(std::move(cycle));
  }
  doc["cycle_count"] = summary.cycles.size();
  doc["cycles"] = std::move(cycles);
  Json actions = Json::array();
  for (const auto& a : summary.action_frequency) {
    Json entry;
    entry["action"] = a.action;
    entry["count"] = a.count;
    actions.push_back(std::move(entry));
  }
  doc["action_frequency"] = std::move(actions);
  return doc;
}

Json view_state_to_json(const ViewState& view) {
  Json doc;
  doc["active_tree"] = view.active_tree;
  std::vector<Fingerprint> folded(view.folded.begin(), view.folded.end());
  doc["folded"] = ids_to_json(folded);
  doc["depth_limit"] = view.depth_limit;
  return doc;
}

ViewState view_state_from_json(const Json& doc) {
  ViewState view;
  view.active_tree = doc.at("active_tree").get<std::size_t>();
  for (const auto& id : doc.at("folded")) view.folded.insert(parse_id(id));
  view.depth_limit = doc.at("depth_limit").get<std::size_t>();
  return view;
}

Json render_graph_to_json(const RenderGraph& view, const StateGraph& graph, const ViewState& state) {
  Json doc;
  doc["active_tree"] = view.active_tree;
  doc["depth_limit"] = state.depth_limit;
  std::vector<Fingerprint> folded(state.folded.begin(), state.folded.end());
  doc["folded"] = ids_to_json(folded);
  doc["truncated"] = view.truncated;
  Json nodes = Json::array();
  for (const auto& v : view.visible_nodes) {
    Json n;
    n["id"] = v.id.str();
    n = node_fields(std::move(n), graph.nodes.at(v.id));
    n["depth"] = v.depth;
    n["rank"] = v.rank;
    n["folded"] = v.folded;
    n["hidden_descendants"] = v.hidden_descendant_count;
    n["stub_edges"] = v.stub_edge_count;
    nodes.push_back(std::move(n));
  }
  doc["nodes"] = std::move(nodes);
  Json edges = Json::array();
  for (const auto& e : view.visible_edges) {
    Json edge;
    edge["from"] = e.from.str();
    edge["to"] = e.to.str();
    edge["action"] = e.action;
    edge["tree_edge"] = e.tree_edge;
    edges.push_back(std::move(edge));
  }
  doc["edges"] = std::move(edges);
  Json index = Json::array();
  for (const auto& t : view.tree_index) {
    Json entry;
    entry["tree"] = t.tree;
    entry["root"] = t.root.str();
    entry["root_vars"] = bindings_to_json(t.root_bindings);
    entry["size"] = t.size;
    index.push_back(std::move(entry));
  }
  doc["tree_index"] = std::move(index);
  return doc;
}

Json compacted_to_json(const CompactedGraph& compacted) {
  Json doc;
  doc["graph"] = graph_to_json(compacted.graph);
  Json summaries = Json::array();
  for (const auto& s : compacted.summary_edges) {
    Json entry;
    entry["from"] = s.from.str();
    entry["to"] = s.to.str();
    entry["action"] = s.action;
    entry["collapsed_count"] = s.collapsed_count;
    entry["elided"] = ids_to_json(s.elided);
    summaries.push_back(std::move(entry));
  }
  doc["summary_edges"] = std::move(summaries);
  return doc;
}

Json clusters_to_json(const std::vector<std::vector<Fingerprint>>& clusters) {
  Json doc = Json::array();
  for (const auto& c : clusters) doc.push_back(ids_to_json(c));
  return doc;
}

std::string graph_to_dot(const StateGraph& graph) {
  std::set<Fingerprint> initial(graph.initial_ids.begin(), graph.initial_ids.end());
  std::string out = "strict digraph DiskGraph {\nnodesep=0.35;\nsubgraph cluster_graph {\ncolor=\"white\";\n";
  for (const auto& [id, node] : graph.nodes) {
    std::string label = render_state_block(node.bindings);
    if (!label.empty() && label.back() == '\n') label.pop_back();
    out += id.str() + " [label=\"" + dot_escape(label) + "\"" + (initial.contains(id) ? ",style = filled" : "") +
           "]\n";
  }
  for (const auto& e : graph.edges) {
    out += e.from.str() + " -> " + e.to.str() + " [label=\"" + dot_escape(e.action) +
           "\",color=\"black\",fontcolor=\"black\"];\n";
  }
  out += "}\n}\n";
  return out;
}

std::string render_graph_to_dot(const RenderGraph& view, const StateGraph& graph) {
  std::string out = "digraph View {\n";
  for (const auto& v : view.visible_nodes) {
    const StateNode& node = graph.nodes.at(v.id);
    std::string label = render_state_inline(node.bindings);
    if (v.hidden_descendant_count > 0) label += "\n(+" + std::to_string(v.hidden_descendant_count) + " hidden)";
    out += "  \"" + v.id.str() + "\" [label=\"" + dot_escape(label) + "\"";
    if (node.is_violating) out += ",color=\"red\"";
    if (v.folded) out += ",shape=box";
    out += "];\n";
  }
  for (const auto& e : view.visible_edges) {
    out += "  \"" + e.from.str() + "\" -> \"" + e.to.str() + "\" [label=\"" + dot_escape(e.action) + "\"" +
           (e.tree_edge ? "" : ",style=dashed") + "];\n";
  }
  out += "}\n";
  return out;
}

Json error_body(ErrorCode code, const std::string& message) {
  Json doc;
  doc["code"] = std::string(code_name(code));
  doc["message"] = message;
  return doc;
}

}  // namespace twb
