#include "twb/state_graph.hpp"

#include <cctype>
#include <charconv>
#include <set>

namespace twb {

std::optional<Fingerprint> Fingerprint::parse(std::string_view text) {
  std::int64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) return std::nullopt;
  return Fingerprint{value};
}

void StateGraph::refresh_flags() {
  std::set<Fingerprint> has_out;
  for (const auto& e : edges) has_out.insert(e.from);
  std::set<Fingerprint> initial(initial_ids.begin(), initial_ids.end());
  for (auto& [id, node] : nodes) {
    node.is_terminal = !has_out.contains(id);
    node.is_initial = initial.contains(id);
  }
}

Adjacency::Adjacency(const StateGraph& graph) {
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    out_[graph.edges[i].from].push_back(i);
    in_[graph.edges[i].to].push_back(i);
  }
}

const std::vector<std::size_t>& Adjacency::out_edges(Fingerprint id) const {
  auto it = out_.find(id);
  return it == out_.end() ? empty_ : it->second;
}

const std::vector<std::size_t>& Adjacency::in_edges(Fingerprint id) const {
  auto it = in_.find(id);
  return it == in_.end() ? empty_ : it->second;
}

std::string normalize_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  bool pending_space = false;
  for (char c : value) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

Bindings normalize_bindings(const Bindings& bindings) {
  Bindings out;
  for (const auto& [name, value] : bindings) out.emplace(name, normalize_value(value));
  return out;
}

std::string render_state_inline(const Bindings& bindings) {
  std::string out;
  if (bindings.size() == 1) {
    const auto& [name, value] = *bindings.begin();
    return name + " = " + normalize_value(value);
  }
  for (const auto& [name, value] : bindings) {
    if (!out.empty()) out += ' ';
    out += "/\\ " + name + " = " + normalize_value(value);
  }
  return out;
}

}  // namespace twb
