#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "twb/state_graph.hpp"

namespace twb {

struct SourceLocation {
  std::string module;
  int start_line = 1;
  int start_col = 1;
  int end_line = 1;
  int end_col = 1;

  friend bool operator==(const SourceLocation&, const SourceLocation&) = default;
};

// Builds a location, enforcing positive coordinates and start <= end.
SourceLocation make_location(std::string module, int start_line, int start_col,
                             int end_line, int end_col);

struct TraceState {
  int index = 0;             // 1-based
  std::string action_label;  // "Initial predicate" for the first state
  std::optional<SourceLocation> action_location;
  Bindings bindings;

  friend bool operator==(const TraceState&, const TraceState&) = default;
};

struct CounterexampleTrace {
  std::vector<TraceState> states;
  std::optional<int> lasso_start;

  friend bool operator==(const CounterexampleTrace&, const CounterexampleTrace&) = default;
};

enum class ErrorCategory {
  ParseError,
  SemanticError,
  ConfigError,
  InvariantViolation,
  TemporalViolation,
  Deadlock,
  EvaluationError,
  Timeout,
  Unknown,
};

std::string_view category_name(ErrorCategory category) noexcept;
std::optional<ErrorCategory> category_from_name(std::string_view name) noexcept;
bool is_violation(ErrorCategory category) noexcept;

struct TlcError {
  ErrorCategory category = ErrorCategory::Unknown;
  std::optional<std::string> property_name;
  std::string message;
  std::vector<SourceLocation> locations;
  std::optional<CounterexampleTrace> trace;
};

// One tool-mode frame: @!@!@STARTMSG code:severity @!@!@ ... @!@!@ENDMSG code @!@!@
struct TlcMessage {
  int code = 0;
  int severity = 0;  // 0 info, 1 error, 2 tlc bug, 3 warning, 4 state
  std::string body;
};

struct RunStats {
  std::uint64_t states_generated = 0;
  std::uint64_t distinct_states = 0;
  std::uint64_t depth = 0;
  bool populated = false;
};

struct ToolOutput {
  std::vector<TlcMessage> messages;
  RunStats stats;
  std::optional<TlcError> error;
  std::optional<std::string> trace_block;
  // Everything printed outside of frames (SANY diagnostics live here).
  std::string unframed_text;
};

// Message code -> error category table. The shipped table is generated from
// data/tlc_message_codes.json; a different file can be loaded for other TLC
// versions.
class MessageClassifier {
 public:
  static const MessageClassifier& builtin();
  static MessageClassifier from_json(std::string_view json_text);

  // Category for a fatal message, or nullopt if the code carries trace data
  // or is informational.
  std::optional<ErrorCategory> classify(const TlcMessage& message) const;
  bool is_auxiliary(int code) const;

 private:
  struct Range {
    int first;
    int last;
    ErrorCategory category;
  };
  struct Pattern {
    std::regex regex;
    ErrorCategory category;
  };

  std::map<int, ErrorCategory> codes_;
  std::vector<Range> ranges_;
  std::vector<int> auxiliary_;
  std::vector<Pattern> patterns_;
};

// Total on arbitrary input except when no frame is found at all, which means
// the checker was not run in tool mode (UnrecognizedFraming).
ToolOutput parse_tool_output(std::string_view raw,
                             const MessageClassifier& classifier = MessageClassifier::builtin());

CounterexampleTrace parse_trace(std::string_view trace_block);

Bindings parse_state_block(std::string_view text);

// Inverse of parse_state_block for single-line values.
std::string render_state_block(const Bindings& bindings);

// "line a, col b to line c, col d of module M"
SourceLocation parse_location(std::string_view text);

// Every location mention in free text, in any of the checker's spellings.
std::vector<SourceLocation> find_locations(std::string_view text,
                                           std::string_view default_module = {});

enum class DotParseMode {
  Strict,   // malformed input throws
  Partial,  // truncated dumps from killed runs: missing braces and dangling edges tolerated
};

StateGraph parse_dot_graph(std::string_view dot_text, DotParseMode mode = DotParseMode::Strict);

}  // namespace twb
