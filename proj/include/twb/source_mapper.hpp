#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "twb/tlc_parser.hpp"

namespace twb {

struct DefinitionIndex {
  std::string module;
  std::map<std::string, SourceLocation> entries;
};

// Name of the first `---- MODULE Name ----` line, if any.
std::optional<std::string> find_module_name(std::string_view spec_text);

// Lexical scan for zero-indentation `Name ==` / `Name(args) ==` lines. Each
// span ends on the line before the next definition or the `====` terminator.
DefinitionIndex index_definitions(std::string_view spec_text);

// Strips any checker-appended parameter suffix ("Name(...)") before lookup.
std::optional<SourceLocation> resolve_action(const DefinitionIndex& index, std::string_view action_label);

// The spec text covered by a location, lines joined with '\n'. Columns are
// 1-based and inclusive.
std::string excerpt(std::string_view spec_text, const SourceLocation& location);

// Whole lines start_line..end_line of a location, for prompt context.
std::string excerpt_lines(std::string_view spec_text, const SourceLocation& location);

}  // namespace twb
