#include "twb/graph_core.hpp"

#include <algorithm>
#include <deque>
#include <tuple>

#include "twb/error.hpp"

namespace twb {

// ---------------------------------------------------------------------------
// Spanning forest

SpanningForest build_spanning_forest(const StateGraph& graph) {
  SpanningForest forest;
  const Adjacency adj(graph);

  std::vector<Fingerprint> roots;
  for (auto id : graph.initial_ids) {
    if (graph.contains(id)) roots.push_back(id);
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());

  for (auto root : roots) {
    Tree tree;
    tree.root = root;
    tree.order[root] = 0;
    tree.depth[root] = 0;
    forest.tree_of[root] = forest.trees.size();
    forest.trees.push_back(std::move(tree));
  }

  std::vector<bool> is_tree_edge(graph.edges.size(), false);
  std::vector<Fingerprint> frontier = roots;
  while (!frontier.empty()) {
    struct Candidate {
      Fingerprint parent;
      std::string_view action;
      std::size_t edge;
    };
    std::map<Fingerprint, Candidate> best;
    for (auto parent : frontier) {
      for (auto ei : adj.out_edges(parent)) {
        const Edge& e = graph.edges[ei];
        if (forest.tree_of.contains(e.to)) continue;
        Candidate cand{parent, e.action, ei};
        auto [it, inserted] = best.try_emplace(e.to, cand);
        if (!inserted && std::tie(cand.parent, cand.action, cand.edge) <
                             std::tie(it->second.parent, it->second.action, it->second.edge)) {
          it->second = cand;
        }
      }
    }

    // Rank new nodes per tree by (parent rank, action, fingerprint).
    std::map<std::size_t, std::vector<std::tuple<std::size_t, std::string_view, Fingerprint>>> per_tree;
    for (const auto& [child, cand] : best) {
      std::size_t t = forest.tree_of.at(cand.parent);
      per_tree[t].emplace_back(forest.trees[t].order.at(cand.parent), cand.action, child);
    }
    std::vector<Fingerprint> next;
    for (auto& [t, fresh] : per_tree) {
      std::sort(fresh.begin(), fresh.end());
      Tree& tree = forest.trees[t];
      for (const auto& [parent_rank, action, child] : fresh) {
        const Candidate& cand = best.at(child);
        tree.parent[child] = cand.parent;
        tree.order[child] = tree.order.size();
        tree.depth[child] = tree.depth.at(cand.parent) + 1;
        tree.children[cand.parent].push_back(child);
        tree.tree_edges.push_back(cand.edge);
        is_tree_edge[cand.edge] = true;
        forest.tree_of[child] = t;
        next.push_back(child);
      }
    }
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
  }

  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    if (!is_tree_edge[i] && forest.tree_of.contains(graph.edges[i].from)) forest.cross_edges.push_back(i);
  }
  for (const auto& [id, node] : graph.nodes) {
    if (!forest.tree_of.contains(id)) forest.unreachable.push_back(id);
  }
  return forest;
}

// ---------------------------------------------------------------------------
// Views

ViewState set_fold(const SpanningForest& forest, ViewState view, Fingerprint node, bool folded) {
  if (!forest.tree_of.contains(node)) {
    throw Error(ErrorCode::UnknownNode, "node " + node.str() + " is not in the forest");
  }
  if (folded) {
    view.folded.insert(node);
  } else {
    view.folded.erase(node);
  }
  return view;
}

RenderGraph visible_view(const StateGraph& graph, const SpanningForest& forest, const ViewState& view,
                         ViewLimits limits) {
  if (view.active_tree >= forest.trees.size()) {
    throw Error(ErrorCode::UnknownTree, "tree " + std::to_string(view.active_tree) + " does not exist (" +
                                            std::to_string(forest.trees.size()) + " trees)");
  }
  if (view.depth_limit < 1) throw Error(ErrorCode::InvalidArgument, "depth limit must be positive");

  const Tree& tree = forest.trees[view.active_tree];
  RenderGraph out;
  out.active_tree = view.active_tree;

  std::vector<Fingerprint> by_rank(tree.size());
  for (const auto& [id, rank] : tree.order) by_rank[rank] = id;

  std::map<Fingerprint, std::size_t> subtree;
  for (auto it = by_rank.rbegin(); it != by_rank.rend(); ++it) {
    std::size_t size = 1;
    if (auto c = tree.children.find(*it); c != tree.children.end()) {
      for (auto child : c->second) size += subtree.at(child);
    }
    subtree[*it] = size;
  }

  std::set<Fingerprint> visible;
  for (auto id : by_rank) {
    bool show;
    if (id == tree.root) {
      show = true;
    } else {
      Fingerprint parent = tree.parent.at(id);
      show = visible.contains(parent) && !view.folded.contains(parent) &&
             tree.depth.at(id) <= view.depth_limit;
    }
    if (!show) continue;
    if (visible.size() >= limits.max_visible_nodes) {
      out.truncated = true;
      break;
    }
    visible.insert(id);
  }

  std::map<Fingerprint, std::size_t> stubs;
  for (auto ei : forest.cross_edges) {
    const Edge& e = graph.edges[ei];
    bool from_visible = visible.contains(e.from);
    bool to_visible = visible.contains(e.to);
    if (from_visible && to_visible) {
      out.visible_edges.push_back({e.from, e.to, e.action, false});
    } else if (from_visible) {
      ++stubs[e.from];
    } else if (to_visible) {
      ++stubs[e.to];
    }
  }
  for (auto ei : tree.tree_edges) {
    const Edge& e = graph.edges[ei];
    if (visible.contains(e.from) && visible.contains(e.to)) {
      out.visible_edges.push_back({e.from, e.to, e.action, true});
    }
  }

  for (auto id : by_rank) {
    if (!visible.contains(id)) continue;
    VisibleNode node;
    node.id = id;
    node.depth = tree.depth.at(id);
    node.rank = tree.order.at(id);
    node.folded = view.folded.contains(id);
    if (auto c = tree.children.find(id); c != tree.children.end()) {
      for (auto child : c->second) {
        if (!visible.contains(child)) node.hidden_descendant_count += subtree.at(child);
      }
    }
    if (auto s = stubs.find(id); s != stubs.end()) node.stub_edge_count = s->second;
    out.visible_nodes.push_back(node);
  }

  std::stable_sort(out.visible_edges.begin(), out.visible_edges.end(),
                   [&](const VisibleEdge& a, const VisibleEdge& b) {
                     return std::tuple(tree.order.at(a.from), tree.order.at(a.to), a.action, !a.tree_edge) <
                            std::tuple(tree.order.at(b.from), tree.order.at(b.to), b.action, !b.tree_edge);
                   });

  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const Tree& each = forest.trees[t];
    out.tree_index.push_back({t, each.root, graph.nodes.at(each.root).bindings, each.size()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Violations

StateGraph mark_violations(StateGraph graph, const TlcError& error) {
  if (!error.trace) {
    throw Error(ErrorCode::InvalidArgument, "cannot mark violations: the error carries no trace");
  }
  const auto& states = error.trace->states;
  if (states.empty()) return graph;

  std::vector<const TraceState*> marked;
  std::string property;
  switch (error.category) {
    case ErrorCategory::InvariantViolation:
      marked.push_back(&states.back());
      property = error.property_name.value_or("INVARIANT");
      break;
    case ErrorCategory::TemporalViolation: {
      int from = error.trace->lasso_start.value_or(static_cast<int>(states.size()));
      for (const auto& s : states) {
        if (s.index >= from) marked.push_back(&s);
      }
      property = error.property_name.value_or("TEMPORAL");
      break;
    }
    case ErrorCategory::Deadlock:
      marked.push_back(&states.back());
      property = "DEADLOCK";
      break;
    default:
      return graph;
  }

  std::map<Bindings, std::vector<Fingerprint>> by_state;
  for (const auto& [id, node] : graph.nodes) by_state[normalize_bindings(node.bindings)].push_back(id);

  for (const TraceState* state : marked) {
    auto it = by_state.find(normalize_bindings(state->bindings));
    if (it == by_state.end()) {
      throw Error(ErrorCode::TraceStateUnmatched,
                  "trace state " + std::to_string(state->index) + " matches no graph node");
    }
    for (auto id : it->second) {
      StateNode& node = graph.nodes.at(id);
      node.is_violating = true;
      auto& props = node.violated_properties;
      if (std::find(props.begin(), props.end(), property) == props.end()) props.push_back(property);
    }
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Structure summary

std::vector<std::vector<Fingerprint>> strongly_connected_components(const StateGraph& graph) {
  std::map<Fingerprint, std::vector<Fingerprint>> succ;
  for (const auto& e : graph.edges) succ[e.from].push_back(e.to);
  for (auto& [id, list] : succ) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  static const std::vector<Fingerprint> none;

  std::map<Fingerprint, std::size_t> index, low;
  std::set<Fingerprint> on_stack;
  std::vector<Fingerprint> stack;
  std::vector<std::vector<Fingerprint>> components;
  std::size_t counter = 0;

  struct Frame {
    Fingerprint node;
    std::size_t next_child;
  };

  for (const auto& [start, unused] : graph.nodes) {
    if (index.contains(start)) continue;
    std::vector<Frame> call{{start, 0}};
    index[start] = low[start] = counter++;
    stack.push_back(start);
    on_stack.insert(start);
    while (!call.empty()) {
      Frame& frame = call.back();
      auto it = succ.find(frame.node);
      const auto& children = it == succ.end() ? none : it->second;
      if (frame.next_child < children.size()) {
        Fingerprint child = children[frame.next_child++];
        if (!index.contains(child)) {
          index[child] = low[child] = counter++;
          stack.push_back(child);
          on_stack.insert(child);
          call.push_back({child, 0});
        } else if (on_stack.contains(child)) {
          low[frame.node] = std::min(low[frame.node], index[child]);
        }
        continue;
      }
      Fingerprint node = frame.node;
      call.pop_back();
      if (!call.empty()) low[call.back().node] = std::min(low[call.back().node], low[node]);
      if (low[node] == index[node]) {
        std::vector<Fingerprint> component;
        Fingerprint member;
        do {
          member = stack.back();
          stack.pop_back();
          on_stack.erase(member);
          component.push_back(member);
        } while (member != node);
        std::sort(component.begin(), component.end());
        components.push_back(std::move(component));
      }
    }
  }
  std::sort(components.begin(), components.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return components;
}

namespace {

CycleWitness shortest_cycle_through(Fingerprint start, const std::set<Fingerprint>& component,
                                    const std::map<Fingerprint, std::vector<Fingerprint>>& succ) {
  auto successors = [&](Fingerprint n) -> const std::vector<Fingerprint>& {
    static const std::vector<Fingerprint> none;
    auto it = succ.find(n);
    return it == succ.end() ? none : it->second;
  };
  const auto& first = successors(start);
  if (std::binary_search(first.begin(), first.end(), start)) return {{start}};

  std::map<Fingerprint, Fingerprint> parent;
  std::deque<Fingerprint> queue{start};
  std::set<Fingerprint> seen{start};
  while (!queue.empty()) {
    Fingerprint n = queue.front();
    queue.pop_front();
    for (auto next : successors(n)) {
      if (next == start) {
        std::vector<Fingerprint> path{n};
        while (path.back() != start) path.push_back(parent.at(path.back()));
        std::reverse(path.begin(), path.end());
        return {std::move(path)};
      }
      if (!component.contains(next) || seen.contains(next)) continue;
      seen.insert(next);
      parent[next] = n;
      queue.push_back(next);
    }
  }
  return {};
}

}  // namespace

StructuralSummary summarize_structure(const StateGraph& graph, std::size_t top_k) {
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
  StructuralSummary summary;
  summary.node_count = graph.nodes.size();
  summary.edge_count = graph.edges.size();

  std::map<Fingerprint, std::vector<Fingerprint>> succ;
  std::map<std::string, std::size_t> frequency;
  for (const auto& e : graph.edges) {
    succ[e.from].push_back(e.to);
    ++frequency[e.action];
  }
  for (auto& [id, list] : succ) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }

  std::vector<Fingerprint> initial = graph.initial_ids;
  std::sort(initial.begin(), initial.end());
  initial.erase(std::unique(initial.begin(), initial.end()), initial.end());
  for (auto id : initial) {
    if (auto it = graph.nodes.find(id); it != graph.nodes.end()) {
      summary.initial_states.push_back({id, it->second.bindings});
    }
  }
  for (const auto& [id, node] : graph.nodes) {
    if (!succ.contains(id)) summary.terminal_states.push_back({id, node.bindings});
  }

  for (const auto& component : strongly_connected_components(graph)) {
    Fingerprint min = component.front();
    bool self_loop = false;
    if (auto it = succ.find(min); it != succ.end()) {
      self_loop = std::binary_search(it->second.begin(), it->second.end(), min);
    }
    if (component.size() < 2 && !self_loop) continue;
    std::set<Fingerprint> members(component.begin(), component.end());
    summary.cycles.push_back(shortest_cycle_through(min, members, succ));
  }

  for (const auto& [action, count] : frequency) summary.action_frequency.push_back({action, count});
  std::stable_sort(summary.action_frequency.begin(), summary.action_frequency.end(),
                   [](const ActionCount& a, const ActionCount& b) { return a.count > b.count; });
  if (summary.action_frequency.size() > top_k) summary.action_frequency.resize(top_k);
  return summary;
}

// ---------------------------------------------------------------------------
// Chain compaction

CompactedGraph compact_chains(const StateGraph& graph) {
  const Adjacency adj(graph);
  std::set<Fingerprint> initial(graph.initial_ids.begin(), graph.initial_ids.end());

  auto eligible = [&](Fingerprint id) {
    const auto& in = adj.in_edges(id);
    const auto& out = adj.out_edges(id);
    if (in.size() != 1 || out.size() != 1) return false;
    const Edge& ein = graph.edges[in.front()];
    const Edge& eout = graph.edges[out.front()];
    if (ein.from == id || ein.action != eout.action) return false;
    const StateNode& node = graph.nodes.at(id);
    return !node.is_violating && !initial.contains(id);
  };

  CompactedGraph out;
  std::set<Fingerprint> elided;
  std::set<std::size_t> removed_edges;
  for (const auto& [id, node] : graph.nodes) {
    if (!eligible(id)) continue;
    const Edge& entry = graph.edges[adj.in_edges(id).front()];
    if (eligible(entry.from)) continue;  // not the first node of its chain

    SummaryEdge summary;
    summary.from = entry.from;
    summary.action = entry.action;
    removed_edges.insert(adj.in_edges(id).front());
    Fingerprint cur = id;
    while (true) {
      summary.elided.push_back(cur);
      elided.insert(cur);
      std::size_t exit_edge = adj.out_edges(cur).front();
      removed_edges.insert(exit_edge);
      Fingerprint next = graph.edges[exit_edge].to;
      if (!eligible(next)) {
        summary.to = next;
        break;
      }
      cur = next;
    }
    summary.collapsed_count = summary.elided.size();
    out.summary_edges.push_back(std::move(summary));
  }

  out.graph.initial_ids = graph.initial_ids;
  for (const auto& [id, node] : graph.nodes) {
    if (elided.contains(id)) {
      out.elided_nodes.emplace(id, node);
    } else {
      out.graph.nodes.emplace(id, node);
    }
  }
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    if (!removed_edges.contains(i)) out.graph.edges.push_back(graph.edges[i]);
  }
  return out;
}

StateGraph expand_compacted(const CompactedGraph& compacted) {
  StateGraph graph = compacted.graph;
  for (const auto& [id, node] : compacted.elided_nodes) graph.nodes.emplace(id, node);
  for (const auto& s : compacted.summary_edges) {
    Fingerprint prev = s.from;
    for (auto id : s.elided) {
      graph.edges.push_back({prev, id, s.action});
      prev = id;
    }
    graph.edges.push_back({prev, s.to, s.action});
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Clustering

std::vector<std::vector<Fingerprint>> cluster_homogeneous(const StateGraph& graph, std::size_t rounds) {
  if (rounds == 0) throw Error(ErrorCode::InvalidArgument, "rounds must be positive");
  const Adjacency adj(graph);

  std::map<Fingerprint, std::size_t> color;
  {
    using Signature = std::tuple<std::vector<std::string>, std::vector<std::string>, bool>;
    std::map<Fingerprint, Signature> sig;
    std::set<Signature> distinct;
    for (const auto& [id, node] : graph.nodes) {
      Signature s;
      for (auto ei : adj.out_edges(id)) std::get<0>(s).push_back(graph.edges[ei].action);
      for (auto ei : adj.in_edges(id)) std::get<1>(s).push_back(graph.edges[ei].action);
      std::sort(std::get<0>(s).begin(), std::get<0>(s).end());
      std::sort(std::get<1>(s).begin(), std::get<1>(s).end());
      std::get<2>(s) = node.is_violating;
      distinct.insert(s);
      sig.emplace(id, std::move(s));
    }
    std::map<Signature, std::size_t> ids;
    for (const auto& s : distinct) ids.emplace(s, ids.size());
    for (const auto& [id, s] : sig) color[id] = ids.at(s);
  }

  using Neighbors = std::vector<std::pair<std::string, std::size_t>>;
  using Signature = std::tuple<std::size_t, Neighbors, Neighbors>;
  for (std::size_t r = 0; r < rounds; ++r) {
    std::map<Fingerprint, Signature> sig;
    std::set<Signature> distinct;
    for (const auto& [id, node] : graph.nodes) {
      Signature s;
      std::get<0>(s) = color.at(id);
      for (auto ei : adj.out_edges(id)) {
        std::get<1>(s).emplace_back(graph.edges[ei].action, color.at(graph.edges[ei].to));
      }
      for (auto ei : adj.in_edges(id)) {
        std::get<2>(s).emplace_back(graph.edges[ei].action, color.at(graph.edges[ei].from));
      }
      std::sort(std::get<1>(s).begin(), std::get<1>(s).end());
      std::sort(std::get<2>(s).begin(), std::get<2>(s).end());
      distinct.insert(s);
      sig.emplace(id, std::move(s));
    }
    std::map<Signature, std::size_t> ids;
    for (const auto& s : distinct) ids.emplace(s, ids.size());
    for (const auto& [id, s] : sig) color[id] = ids.at(s);
  }

  std::map<std::size_t, std::vector<Fingerprint>> groups;
  for (const auto& [id, c] : color) groups[c].push_back(id);
  std::vector<std::vector<Fingerprint>> clusters;
  for (auto& [c, members] : groups) clusters.push_back(std::move(members));
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return clusters;
}

}  // namespace twb
