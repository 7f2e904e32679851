#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace twb {

// TLC's 64-bit state hash. Rendered as signed decimal text everywhere it
// leaves the process.
struct Fingerprint {
  std::int64_t value = 0;

  friend auto operator<=>(const Fingerprint&, const Fingerprint&) = default;

  std::string str() const { return std::to_string(value); }
  static std::optional<Fingerprint> parse(std::string_view text);
};

// variable name -> value text exactly as the checker printed it
using Bindings = std::map<std::string, std::string>;

struct StateNode {
  Bindings bindings;
  bool is_initial = false;
  bool is_terminal = false;
  bool is_violating = false;
  std::vector<std::string> violated_properties;

  friend bool operator==(const StateNode&, const StateNode&) = default;
};

struct Edge {
  Fingerprint from;
  Fingerprint to;
  std::string action;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct StateGraph {
  std::map<Fingerprint, StateNode> nodes;
  std::vector<Edge> edges;
  std::vector<Fingerprint> initial_ids;

  bool contains(Fingerprint id) const { return nodes.contains(id); }

  // Recomputes is_terminal and is_initial from the edge list and initial_ids.
  void refresh_flags();

  friend bool operator==(const StateGraph&, const StateGraph&) = default;
};

// Successor/predecessor lists over a StateGraph, indexed by edge position.
class Adjacency {
 public:
  explicit Adjacency(const StateGraph& graph);

  const std::vector<std::size_t>& out_edges(Fingerprint id) const;
  const std::vector<std::size_t>& in_edges(Fingerprint id) const;

 private:
  std::map<Fingerprint, std::vector<std::size_t>> out_;
  std::map<Fingerprint, std::vector<std::size_t>> in_;
  std::vector<std::size_t> empty_;
};

// Collapses whitespace runs to one space and trims both ends. Two renderings
// of the same value (dot label vs. trace) compare equal after this.
std::string normalize_value(std::string_view value);
Bindings normalize_bindings(const Bindings& bindings);

// "can = [..]" for one variable, "/\ x = 1 /\ y = 2" for several.
std::string render_state_inline(const Bindings& bindings);

}  // namespace twb

template <>
struct std::hash<twb::Fingerprint> {
  std::size_t operator()(const twb::Fingerprint& fp) const noexcept {
    return std::hash<std::int64_t>{}(fp.value);
  }
};
