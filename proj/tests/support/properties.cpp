#include "properties.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "generators.hpp"
#include "oracles.hpp"
#include "twb/documents.hpp"

namespace twb::testing {

namespace {

std::string fp(Fingerprint id) { return id.str(); }

std::set<Fingerprint> ids_of(const RenderGraph& rg) {
  std::set<Fingerprint> out;
  for (const auto& n : rg.visible_nodes) out.insert(n.id);
  return out;
}

}  // namespace

Problems forest_problems(const StateGraph& graph) {
  Problems problems;
  SpanningForest forest = build_spanning_forest(graph);
  auto reachable = reachable_oracle(graph);

  std::set<Fingerprint> covered;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    for (const auto& [id, rank] : forest.trees[t].order) {
      if (!covered.insert(id).second) problems.push_back("node " + fp(id) + " in two trees");
      auto it = forest.tree_of.find(id);
      if (it == forest.tree_of.end() || it->second != t) problems.push_back("tree_of wrong for " + fp(id));
    }
  }
  if (covered != reachable) problems.push_back("trees do not cover exactly the reachable nodes");
  for (auto id : forest.unreachable) {
    if (reachable.contains(id)) problems.push_back("reachable node listed unreachable: " + fp(id));
  }
  if (forest.unreachable.size() + reachable.size() != graph.nodes.size()) {
    problems.push_back("unreachable list incomplete");
  }

  std::multiset<Edge> expected, got;
  for (const auto& e : graph.edges) {
    if (reachable.contains(e.from)) expected.insert(e);
  }
  for (const auto& t : forest.trees) {
    for (auto ei : t.tree_edges) {
      got.insert(graph.edges[ei]);
      const Edge& e = graph.edges[ei];
      auto p = t.parent.find(e.to);
      if (p == t.parent.end() || p->second != e.from) problems.push_back("tree edge is not a parent link");
    }
    if (t.tree_edges.size() + 1 != t.size()) problems.push_back("tree edge count != size - 1");
  }
  for (auto ei : forest.cross_edges) got.insert(graph.edges[ei]);
  if (got != expected) problems.push_back("tree + cross edges differ from reachable edges");
  return problems;
}

std::string forest_dump(const StateGraph& graph) {
  SpanningForest forest = build_spanning_forest(graph);
  std::ostringstream out;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    ViewState v;
    v.active_tree = t;
    v.depth_limit = graph.nodes.size() + 1;
    RenderGraph rg = visible_view(graph, forest, v, ViewLimits{graph.nodes.size() + 1});
    out << to_text(render_graph_to_json(rg, graph, v));
    for (auto ei : forest.trees[t].tree_edges) out << ei << ',';
    out << '\n';
  }
  for (auto ei : forest.cross_edges) out << ei << ',';
  for (auto id : forest.unreachable) out << fp(id) << ';';
  return out.str();
}

Problems cycle_problems(const StateGraph& graph) {
  Problems problems;
  StructuralSummary s = summarize_structure(graph, 5);
  auto classes = cyclic_classes_oracle(graph);
  if (s.cycles.empty() != classes.empty()) {
    problems.push_back("cycle existence: got " + std::to_string(s.cycles.size()) + ", oracle " +
                       std::to_string(classes.size()));
  }
  if (s.cycles.size() != classes.size()) problems.push_back("one witness per cyclic class expected");
  std::set<std::size_t> hit;
  for (const auto& c : s.cycles) {
    if (!is_closed_walk(graph, c.nodes)) problems.push_back("witness is not a closed walk");
    std::optional<std::size_t> owner;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i].contains(c.nodes.front())) owner = i;
    }
    if (!owner) {
      problems.push_back("witness outside every cyclic class");
      continue;
    }
    for (auto id : c.nodes) {
      if (!classes[*owner].contains(id)) problems.push_back("witness spans two classes");
    }
    if (!hit.insert(*owner).second) problems.push_back("two witnesses for one class");
  }
  return problems;
}

Problems view_problems(const StateGraph& graph, std::mt19937_64& rng) {
  Problems problems;
  SpanningForest forest = build_spanning_forest(graph);
  if (forest.trees.empty()) return problems;
  std::uniform_int_distribution<std::size_t> tree_pick(0, forest.trees.size() - 1);
  std::uniform_int_distribution<std::size_t> depth_pick(1, 6);
  ViewState view;
  view.active_tree = tree_pick(rng);
  view.depth_limit = depth_pick(rng);
  const Tree& tree = forest.trees[view.active_tree];
  view.folded = random_fold_set(rng, tree, 0.15);

  RenderGraph rg = visible_view(graph, forest, view);
  auto visible = ids_of(rg);
  for (const auto& e : rg.visible_edges) {
    if (!visible.contains(e.from) || !visible.contains(e.to)) problems.push_back("edge leaves the visible set");
  }
  if (visible != visible_oracle(tree, view)) problems.push_back("visible set differs from oracle");
  if (rg.truncated) problems.push_back("unexpected truncation");

  for (const auto& n : rg.visible_nodes) {
    std::size_t expected = 0;
    auto kids = tree.children.find(n.id);
    if (kids != tree.children.end()) {
      for (auto c : kids->second) {
        if (!visible.contains(c)) expected += subtree_size_oracle(tree, c);
      }
    }
    if (n.hidden_descendant_count != expected) problems.push_back("hidden count wrong for " + fp(n.id));
    bool all_hidden = n.folded || tree.depth.at(n.id) == view.depth_limit;
    if (all_hidden && n.hidden_descendant_count != subtree_size_oracle(tree, n.id) - 1) {
      problems.push_back("folded hidden count != subtree size - 1 for " + fp(n.id));
    }
    if (n.folded != view.folded.contains(n.id)) problems.push_back("folded flag wrong");
  }

  // fold then unfold a node that was not folded: identical view
  std::vector<Fingerprint> unfolded;
  for (const auto& [id, rank] : tree.order) {
    if (!view.folded.contains(id)) unfolded.push_back(id);
  }
  if (!unfolded.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, unfolded.size() - 1);
    Fingerprint x = unfolded[pick(rng)];
    ViewState folded = set_fold(forest, view, x, true);
    RenderGraph more = visible_view(graph, forest, folded);
    auto fewer = ids_of(more);
    if (!std::includes(visible.begin(), visible.end(), fewer.begin(), fewer.end())) {
      problems.push_back("adding a fold grew the visible set");
    }
    ViewState back = set_fold(forest, folded, x, false);
    if (!(back == view)) problems.push_back("fold/unfold did not restore the view state");
    RenderGraph again = visible_view(graph, forest, back);
    if (to_text(render_graph_to_json(again, graph, back)) != to_text(render_graph_to_json(rg, graph, view))) {
      problems.push_back("fold/unfold did not restore the view document");
    }
  }
  return problems;
}

Problems compaction_problems(const StateGraph& graph) {
  Problems problems;
  CompactedGraph c = compact_chains(graph);
  std::size_t replaced = 0;
  std::set<Fingerprint> elided;
  for (const auto& s : c.summary_edges) {
    replaced += s.collapsed_count + 1;
    if (s.elided.size() != s.collapsed_count) problems.push_back("collapsed_count != elided length");
    for (auto id : s.elided) elided.insert(id);
    if (s.collapsed_count == 0) problems.push_back("empty summary edge");
  }
  if (graph.edges.size() != c.graph.edges.size() + replaced) problems.push_back("edge count not conserved");
  for (auto id : elided) {
    const StateNode& n = graph.nodes.at(id);
    if (n.is_violating || n.is_initial || n.is_terminal) problems.push_back("protected node elided: " + fp(id));
    if (c.graph.contains(id)) problems.push_back("elided node still present");
  }
  StateGraph back = expand_compacted(c);
  if (back.nodes != graph.nodes) problems.push_back("expansion changed the nodes");
  if (std::multiset<Edge>(back.edges.begin(), back.edges.end()) !=
      std::multiset<Edge>(graph.edges.begin(), graph.edges.end())) {
    problems.push_back("expansion changed the edges");
  }
  if (std::set<Fingerprint>(back.initial_ids.begin(), back.initial_ids.end()) !=
      std::set<Fingerprint>(graph.initial_ids.begin(), graph.initial_ids.end())) {
    problems.push_back("expansion changed the initial states");
  }
  return problems;
}

Problems cluster_problems(const StateGraph& graph, std::size_t max_rounds) {
  Problems problems;
  std::vector<std::vector<std::vector<Fingerprint>>> by_round(max_rounds + 1);
  for (std::size_t r = 1; r <= max_rounds; ++r) {
    by_round[r] = cluster_homogeneous(graph, r);
    std::set<std::set<Fingerprint>> got;
    for (const auto& c : by_round[r]) got.insert(std::set<Fingerprint>(c.begin(), c.end()));
    if (got != cluster_oracle(graph, r)) problems.push_back("rounds " + std::to_string(r) + " differs from oracle");
    if (r > 1 && !refines(by_round[r], by_round[r - 1])) {
      problems.push_back("rounds " + std::to_string(r) + " does not refine rounds " + std::to_string(r - 1));
    }
  }
  return problems;
}

}  // namespace twb::testing
