#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "twb/state_graph.hpp"
#include "twb/tlc_parser.hpp"

namespace twb {

// One breadth-first tree rooted at an initial state.
struct Tree {
  Fingerprint root;
  std::map<Fingerprint, Fingerprint> parent;  // child -> parent; root absent
  std::map<Fingerprint, std::size_t> order;   // breadth-first rank, root = 0
  std::map<Fingerprint, std::size_t> depth;
  std::map<Fingerprint, std::vector<Fingerprint>> children;  // sorted by rank
  std::vector<std::size_t> tree_edges;  // indices into StateGraph::edges

  std::size_t size() const { return order.size(); }
  bool contains(Fingerprint id) const { return order.contains(id); }
};

struct SpanningForest {
  std::vector<Tree> trees;
  std::vector<std::size_t> cross_edges;  // indices into StateGraph::edges
  std::vector<Fingerprint> unreachable;
  std::map<Fingerprint, std::size_t> tree_of;

  std::size_t node_count() const { return tree_of.size(); }
};

// Multi-source BFS from the initial states. A node belongs to the tree of the
// parent that first reaches it; ties within a level go to the smaller parent
// fingerprint, then the smaller action label.
SpanningForest build_spanning_forest(const StateGraph& graph);

struct ViewState {
  std::size_t active_tree = 0;
  std::set<Fingerprint> folded;
  std::size_t depth_limit = 2;

  friend bool operator==(const ViewState&, const ViewState&) = default;
};

ViewState set_fold(const SpanningForest& forest, ViewState view, Fingerprint node, bool folded);

struct VisibleNode {
  Fingerprint id;
  std::size_t depth = 0;
  std::size_t rank = 0;
  bool folded = false;
  std::size_t hidden_descendant_count = 0;
  std::size_t stub_edge_count = 0;
};

struct VisibleEdge {
  Fingerprint from;
  Fingerprint to;
  std::string action;
  bool tree_edge = false;
};

struct TreeIndexEntry {
  std::size_t tree = 0;
  Fingerprint root;
  Bindings root_bindings;
  std::size_t size = 0;
};

struct RenderGraph {
  std::size_t active_tree = 0;
  std::vector<VisibleNode> visible_nodes;
  std::vector<VisibleEdge> visible_edges;
  std::vector<TreeIndexEntry> tree_index;
  bool truncated = false;
};

struct ViewLimits {
  std::size_t max_visible_nodes = 500;
};

// Materializes only the active tree: nodes with no folded tree ancestor and
// depth <= depth_limit. Cross edges leaving the visible set become stub counts.
RenderGraph visible_view(const StateGraph& graph, const SpanningForest& forest, const ViewState& view,
                         ViewLimits limits = {});

// Marks the nodes a counterexample implicates. Trace states are matched to
// nodes by normalized bindings.
StateGraph mark_violations(StateGraph graph, const TlcError& error);

struct CycleWitness {
  std::vector<Fingerprint> nodes;  // closes back to nodes.front()
};

struct SummaryState {
  Fingerprint id;
  Bindings bindings;
};

struct ActionCount {
  std::string action;
  std::size_t count = 0;
};

struct StructuralSummary {
  std::vector<SummaryState> initial_states;
  std::vector<SummaryState> terminal_states;
  std::vector<CycleWitness> cycles;
  std::vector<ActionCount> action_frequency;
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
};

// Strongly connected components (Tarjan, iterative), each sorted ascending,
// listed in order of their smallest member.
std::vector<std::vector<Fingerprint>> strongly_connected_components(const StateGraph& graph);

StructuralSummary summarize_structure(const StateGraph& graph, std::size_t top_k);

struct SummaryEdge {
  Fingerprint from;
  Fingerprint to;
  std::string action;
  std::size_t collapsed_count = 0;
  std::vector<Fingerprint> elided;  // in path order
};

struct CompactedGraph {
  StateGraph graph;  // surviving nodes and edges, summary edges excluded
  std::vector<SummaryEdge> summary_edges;
  std::map<Fingerprint, StateNode> elided_nodes;
};

// Replaces maximal pass-through chains (in/out degree 1, one action label,
// not initial/terminal/violating) by a single summary edge.
CompactedGraph compact_chains(const StateGraph& graph);

// Inverse of compact_chains, up to edge order.
StateGraph expand_compacted(const CompactedGraph& compacted);

// Color refinement. Clusters are sorted ascending and ordered by their
// smallest member.
std::vector<std::vector<Fingerprint>> cluster_homogeneous(const StateGraph& graph, std::size_t rounds = 2);

}  // namespace twb
