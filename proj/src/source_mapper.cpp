#include "twb/source_mapper.hpp"

#include <algorithm>
#include <regex>

#include "twb/error.hpp"
#include "twb/text.hpp"

namespace twb {

namespace {

const std::regex& header_regex() {
  static const std::regex re(R"(^\s*-{4,}\s*MODULE\s+(\w+)\s*-{4,}\s*$)");
  return re;
}

const std::regex& definition_regex() {
  static const std::regex re(R"(^([A-Za-z_][A-Za-z0-9_]*)\s*(\([^)]*\))?\s*==)");
  return re;
}

bool is_terminator(std::string_view line) {
  auto t = rtrim_view(line);
  return t.size() >= 4 && std::all_of(t.begin(), t.end(), [](char c) { return c == '='; });
}

// Updates the (* *) nesting depth with the contents of one line.
int comment_depth_after(std::string_view line, int depth) {
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    if (line[i] == '(' && line[i + 1] == '*') {
      ++depth;
      ++i;
    } else if (line[i] == '*' && line[i + 1] == ')' && depth > 0) {
      --depth;
      ++i;
    } else if (depth == 0 && line[i] == '\\' && line[i + 1] == '*') {
      break;  // line comment
    }
  }
  return depth;
}

int trimmed_length(std::string_view line) {
  return std::max<int>(1, static_cast<int>(rtrim_view(line).size()));
}

}  // namespace

std::optional<std::string> find_module_name(std::string_view spec_text) {
  for (auto line : split_lines(spec_text)) {
    std::string s(line);
    std::smatch m;
    if (std::regex_match(s, m, header_regex())) return m[1].str();
  }
  return std::nullopt;
}

DefinitionIndex index_definitions(std::string_view spec_text) {
  auto lines = split_lines(spec_text);
  std::size_t header = lines.size();
  DefinitionIndex index;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string s(lines[i]);
    std::smatch m;
    if (std::regex_match(s, m, header_regex())) {
      index.module = m[1].str();
      header = i;
      break;
    }
  }
  if (header == lines.size()) throw Error(ErrorCode::MissingModuleHeader, "spec has no MODULE header");

  struct Start {
    std::string name;
    std::size_t line;  // 0-based
  };
  std::vector<Start> starts;
  std::size_t terminator = lines.size();
  int depth = 0;
  for (std::size_t i = header + 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (depth == 0) {
      if (is_terminator(line)) {
        terminator = i;
        break;
      }
      std::string s(line);
      std::smatch m;
      if (std::regex_search(s, m, definition_regex())) starts.push_back({m[1].str(), i});
    }
    depth = comment_depth_after(line, depth);
  }

  for (std::size_t k = 0; k < starts.size(); ++k) {
    std::size_t next = k + 1 < starts.size() ? starts[k + 1].line : terminator;
    std::size_t last = std::max(starts[k].line, next - 1);
    if (last >= lines.size()) last = lines.size() - 1;
    if (index.entries.contains(starts[k].name)) continue;  // first definition wins
    index.entries.emplace(starts[k].name,
                          make_location(index.module, static_cast<int>(starts[k].line + 1), 1,
                                        static_cast<int>(last + 1), trimmed_length(lines[last])));
  }
  return index;
}

std::optional<SourceLocation> resolve_action(const DefinitionIndex& index, std::string_view action_label) {
  auto name = trim(action_label.substr(0, action_label.find('(')));
  auto it = index.entries.find(name);
  if (it == index.entries.end()) return std::nullopt;
  return it->second;
}

std::string excerpt(std::string_view spec_text, const SourceLocation& location) {
  auto lines = split_lines(spec_text);
  std::string out;
  for (int n = location.start_line; n <= location.end_line; ++n) {
    if (n < 1 || static_cast<std::size_t>(n) > lines.size()) break;
    std::string_view line = lines[n - 1];
    std::size_t from = n == location.start_line ? static_cast<std::size_t>(location.start_col - 1) : 0;
    std::size_t to = n == location.end_line ? static_cast<std::size_t>(location.end_col) : line.size();
    if (n != location.start_line) out += '\n';
    if (from < line.size()) out += line.substr(from, std::min(to, line.size()) - from);
  }
  return out;
}

std::string excerpt_lines(std::string_view spec_text, const SourceLocation& location) {
  auto lines = split_lines(spec_text);
  std::string out;
  for (int n = location.start_line; n <= location.end_line; ++n) {
    if (n < 1 || static_cast<std::size_t>(n) > lines.size()) break;
    if (n != location.start_line) out += '\n';
    out += lines[n - 1];
  }
  return out;
}

}  // namespace twb
