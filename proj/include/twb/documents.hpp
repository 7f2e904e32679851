#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "twb/error.hpp"
#include "twb/graph_core.hpp"
#include "twb/runner.hpp"
#include "twb/state_graph.hpp"
#include "twb/tlc_parser.hpp"

// JSON documents exchanged over HTTP, written to disk and printed by the CLI.
// Field order is fixed (ordered_json) so equal values serialize to equal bytes.
namespace twb {

using Json = nlohmann::ordered_json;

// Two-space indented text with a trailing newline.
std::string to_text(const Json& doc);

// {"nodes":[{"id","vars","initial","terminal","violating","violated"}],
//  "edges":[{"from","to","action"}],"initial":[...]}
Json graph_to_json(const StateGraph& graph);
StateGraph graph_from_json(const Json& doc);  // throws InvalidArgument

// Empty when the document conforms to the canonical graph schema.
std::vector<std::string> graph_schema_problems(const Json& doc);

Json location_to_json(const SourceLocation& location);
SourceLocation location_from_json(const Json& doc);

Json trace_to_json(const CounterexampleTrace& trace);
CounterexampleTrace trace_from_json(const Json& doc);

Json tlc_error_to_json(const TlcError& error);
TlcError tlc_error_from_json(const Json& doc);

Json stats_to_json(const RunStats& stats);
RunStats stats_from_json(const Json& doc);

Json options_to_json(const RunOptions& options);
// Fields absent from `doc` keep the values of `base`. Validates the result.
RunOptions options_from_json(const Json& doc, RunOptions base = {});

// The graph travels separately; graph_available tells whether one exists.
Json run_result_to_json(const TlcRunResult& result);
TlcRunResult run_result_from_json(const Json& doc);

struct SummaryLimits {
  std::size_t max_cycles = static_cast<std::size_t>(-1);
  std::size_t max_cycle_length = static_cast<std::size_t>(-1);
};
Json summary_to_json(const StructuralSummary& summary, SummaryLimits limits = {});

Json view_state_to_json(const ViewState& view);
ViewState view_state_from_json(const Json& doc);

Json render_graph_to_json(const RenderGraph& view, const StateGraph& graph, const ViewState& state);

Json compacted_to_json(const CompactedGraph& compacted);
Json clusters_to_json(const std::vector<std::vector<Fingerprint>>& clusters);

// Same dialect as the checker's own dump, so parse_dot_graph reads it back.
std::string graph_to_dot(const StateGraph& graph);

// Debug export of a view; not meant to be re-parsed.
std::string render_graph_to_dot(const RenderGraph& view, const StateGraph& graph);

// {"code": ..., "message": ...}
Json error_body(ErrorCode code, const std::string& message);

}  // namespace twb
