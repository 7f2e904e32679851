#include "twb/tlc_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "json.hpp"
#include "twb/error.hpp"
#include "twb/text.hpp"

namespace twb {

namespace {

constexpr std::string_view kStartMarker = "@!@!@STARTMSG ";
constexpr std::string_view kEndMarker = "@!@!@ENDMSG ";
constexpr std::string_view kMarkerTail = " @!@!@";

// Generated from data/tlc_message_codes.json.
constexpr std::string_view kBuiltinCodes =
#include "tlc_message_codes.inc"
    ;

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::optional<int> to_int(std::string_view text) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

std::uint64_t to_count(const std::string& digits) {
  std::uint64_t value = 0;
  for (char c : digits) {
    if (std::isdigit(static_cast<unsigned char>(c))) value = value * 10 + static_cast<unsigned>(c - '0');
  }
  return value;
}

}  // namespace

SourceLocation make_location(std::string module, int start_line, int start_col, int end_line,
                             int end_col) {
  if (start_line < 1 || start_col < 1 || end_line < 1 || end_col < 1) {
    throw Error(ErrorCode::MalformedLocation, "location coordinates must be positive");
  }
  if (std::pair(start_line, start_col) > std::pair(end_line, end_col)) {
    throw Error(ErrorCode::MalformedLocation, "location start lies after its end");
  }
  return SourceLocation{std::move(module), start_line, start_col, end_line, end_col};
}

std::string_view category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::ParseError: return "ParseError";
    case ErrorCategory::SemanticError: return "SemanticError";
    case ErrorCategory::ConfigError: return "ConfigError";
    case ErrorCategory::InvariantViolation: return "InvariantViolation";
    case ErrorCategory::TemporalViolation: return "TemporalViolation";
    case ErrorCategory::Deadlock: return "Deadlock";
    case ErrorCategory::EvaluationError: return "EvaluationError";
    case ErrorCategory::Timeout: return "Timeout";
    case ErrorCategory::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::optional<ErrorCategory> category_from_name(std::string_view name) noexcept {
  for (auto c : {ErrorCategory::ParseError, ErrorCategory::SemanticError, ErrorCategory::ConfigError,
                 ErrorCategory::InvariantViolation, ErrorCategory::TemporalViolation,
                 ErrorCategory::Deadlock, ErrorCategory::EvaluationError, ErrorCategory::Timeout,
                 ErrorCategory::Unknown}) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

bool is_violation(ErrorCategory category) noexcept {
  return category == ErrorCategory::InvariantViolation ||
         category == ErrorCategory::TemporalViolation || category == ErrorCategory::Deadlock;
}

// ---------------------------------------------------------------------------
// MessageClassifier

const MessageClassifier& MessageClassifier::builtin() {
  static const MessageClassifier instance = from_json(kBuiltinCodes);
  return instance;
}

MessageClassifier MessageClassifier::from_json(std::string_view json_text) {
  MessageClassifier out;
  auto category = [](const nlohmann::json& value) {
    auto c = category_from_name(value.get<std::string>());
    if (!c) throw Error(ErrorCode::InvalidConfig, "unknown error category " + value.dump());
    return *c;
  };
  try {
    auto doc = nlohmann::json::parse(json_text);
    for (const auto& [code, name] : doc.at("codes").items()) {
      auto parsed = to_int(code);
      if (!parsed) throw Error(ErrorCode::InvalidConfig, "message code is not a number: " + code);
      out.codes_[*parsed] = category(name);
    }
    for (const auto& range : doc.value("ranges", nlohmann::json::array())) {
      out.ranges_.push_back({range.at("first").get<int>(), range.at("last").get<int>(),
                             category(range.at("category"))});
    }
    out.auxiliary_ = doc.value("auxiliary", std::vector<int>{});
    for (const auto& pattern : doc.value("patterns", nlohmann::json::array())) {
      out.patterns_.push_back({std::regex(pattern.at("regex").get<std::string>()),
                               category(pattern.at("category"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("message code table: ") + e.what());
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("message code table regex: ") + e.what());
  }
  return out;
}

bool MessageClassifier::is_auxiliary(int code) const {
  return std::find(auxiliary_.begin(), auxiliary_.end(), code) != auxiliary_.end();
}

std::optional<ErrorCategory> MessageClassifier::classify(const TlcMessage& message) const {
  if (message.severity != 1 && message.severity != 2) return std::nullopt;
  if (is_auxiliary(message.code)) return std::nullopt;
  if (auto it = codes_.find(message.code); it != codes_.end()) return it->second;
  for (const auto& range : ranges_) {
    if (message.code >= range.first && message.code <= range.last) return range.category;
  }
  for (const auto& pattern : patterns_) {
    if (std::regex_search(message.body, pattern.regex)) return pattern.category;
  }
  return ErrorCategory::Unknown;
}

// ---------------------------------------------------------------------------
// Locations

SourceLocation parse_location(std::string_view text) {
  static const std::regex re(
      R"(^\s*line (\d+), col (\d+) to line (\d+), col (\d+) of module (\w+)\s*$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(text.begin(), text.end(), m, re)) {
    throw Error(ErrorCode::MalformedLocation, "not a checker location: " + std::string(text));
  }
  auto num = [&](int i) {
    auto v = to_int(std::string_view(&*m[i].first, static_cast<std::size_t>(m[i].length())));
    if (!v) throw Error(ErrorCode::MalformedLocation, "coordinate out of range");
    return *v;
  };
  return make_location(m[5].str(), num(1), num(2), num(3), num(4));
}

std::vector<SourceLocation> find_locations(std::string_view text, std::string_view default_module) {
  static const std::regex long_form(
      R"(line (\d+), col (\d+) to line (\d+), col (\d+) of module (\w+))");
  static const std::regex nested_form(
      R"(Line (\d+), column (\d+) to line (\d+), column (\d+) in (\w+))");
  static const std::regex point_form(R"(at line (\d+), column (\d+))");

  struct Found {
    std::size_t offset;
    SourceLocation location;
  };
  std::vector<Found> found;
  const std::string haystack(text);
  auto scan = [&](const std::regex& re, bool point) {
    for (auto it = std::sregex_iterator(haystack.begin(), haystack.end(), re);
         it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      try {
        auto num = [&](int i) {
          auto v = to_int(m[i].str());
          if (!v) throw Error(ErrorCode::MalformedLocation, "coordinate out of range");
          return *v;
        };
        SourceLocation loc =
            point ? make_location(std::string(default_module), num(1), num(2), num(1), num(2))
                  : make_location(m[5].str(), num(1), num(2), num(3), num(4));
        found.push_back({static_cast<std::size_t>(m.position(0)), std::move(loc)});
      } catch (const Error&) {
      }
    }
  };
  scan(long_form, false);
  scan(nested_form, false);
  scan(point_form, true);
  std::stable_sort(found.begin(), found.end(),
                   [](const Found& a, const Found& b) { return a.offset < b.offset; });
  std::vector<SourceLocation> out;
  for (auto& f : found) {
    if (std::find(out.begin(), out.end(), f.location) == out.end()) out.push_back(std::move(f.location));
  }
  return out;
}

// ---------------------------------------------------------------------------
// State blocks and traces

Bindings parse_state_block(std::string_view text) {
  Bindings out;
  std::optional<std::string> name;
  std::string value;
  bool prefixed = false;
  bool seen_any = false;

  auto flush = [&] {
    if (!name) return;
    std::string v = rtrim(value);
    if (trim(v).empty()) throw Error(ErrorCode::MalformedBinding, "binding for " + *name + " has no value");
    if (!out.emplace(*name, std::move(v)).second) {
      throw Error(ErrorCode::MalformedBinding, "variable " + *name + " bound twice");
    }
    name.reset();
    value.clear();
  };

  // Parses "<var> = <value>" from the start of `line`.
  auto start_binding = [&](std::string_view line) {
    std::size_t i = 0;
    if (i >= line.size() || !is_ident_start(line[i])) {
      throw Error(ErrorCode::MalformedBinding, "expected a variable name in: " + std::string(line));
    }
    while (i < line.size() && is_ident_char(line[i])) ++i;
    name = std::string(line.substr(0, i));
    while (i < line.size() && line[i] == ' ') ++i;
    if (i >= line.size() || line[i] != '=') {
      throw Error(ErrorCode::MalformedBinding, "expected '=' in: " + std::string(line));
    }
    ++i;
    while (i < line.size() && line[i] == ' ') ++i;
    value = std::string(line.substr(i));
  };

  for (std::string_view line : split_lines(text)) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const bool top_level = starts_with(line, "/\\ ") || line == "/\\";
    if (!seen_any) {
      if (trim(line).empty()) continue;
      seen_any = true;
      prefixed = top_level;
      start_binding(prefixed ? ltrim_view(line.substr(2)) : line);
      continue;
    }
    if (top_level) {
      if (!prefixed) {
        throw Error(ErrorCode::MalformedBinding, "mixed prefixed and unprefixed bindings");
      }
      flush();
      start_binding(ltrim_view(line.substr(2)));
    } else {
      value += '\n';
      value += line;
    }
  }
  flush();
  return out;
}

std::string render_state_block(const Bindings& bindings) {
  std::string out;
  for (const auto& [name, value] : bindings) {
    if (!out.empty()) out += '\n';
    out += "/\\ " + name + " = " + value;
  }
  return out;
}

namespace {

struct Header {
  int index;
  std::string label;
};

std::optional<int> leading_number(std::string_view& line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 0) return std::nullopt;
  auto n = to_int(line.substr(0, i));
  if (!n) return std::nullopt;
  line.remove_prefix(i);
  return n;
}

// "<i>: <label>" or "State <i>: <label>"
std::optional<Header> match_header(std::string_view line) {
  if (starts_with(line, "State ")) line.remove_prefix(6);
  auto n = leading_number(line);
  if (!n || !starts_with(line, ": ")) return std::nullopt;
  line.remove_prefix(2);
  return Header{*n, std::string(line)};
}

// Lasso markers: "Back to state 2", "State 4: Back to state 2",
// "2: Back to state: <Action ...>". Returns the state index looped back to.
std::optional<int> match_back_to_state(std::string_view line) {
  std::string_view rest = line;
  std::optional<int> prefix_index;
  if (starts_with(rest, "State ")) rest.remove_prefix(6);
  if (auto n = leading_number(rest)) {
    if (!starts_with(rest, ": ")) return std::nullopt;
    rest.remove_prefix(2);
    prefix_index = n;
  } else {
    rest = line;
  }
  if (!starts_with(rest, "Back to state")) return std::nullopt;
  rest.remove_prefix(std::string_view("Back to state").size());
  if (starts_with(rest, " ")) {
    std::string_view digits = rest.substr(1);
    if (auto n = leading_number(digits)) return n;
  }
  return prefix_index;
}

// "<PickSameColorWhite line 20, col 3 to line 22, col 57 of module CoffeeCan>"
void split_action_label(std::string label, TraceState& state) {
  label = trim(label);
  if (label.size() >= 2 && label.front() == '<' && label.back() == '>') {
    label = label.substr(1, label.size() - 2);
  }
  static const std::regex with_location(
      R"(^(.*?)\s+(line \d+, col \d+ to line \d+, col \d+ of module \w+)$)");
  std::smatch m;
  if (std::regex_match(label, m, with_location)) {
    state.action_label = m[1].str();
    try {
      state.action_location = parse_location(m[2].str());
    } catch (const Error&) {
      state.action_label = label;
    }
    return;
  }
  state.action_label = label;
}

}  // namespace

CounterexampleTrace parse_trace(std::string_view trace_block) {
  CounterexampleTrace trace;
  std::optional<TraceState> current;
  std::string body;

  auto finish = [&] {
    if (!current) return;
    try {
      current->bindings = parse_state_block(body);
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedTrace,
                  "state " + std::to_string(current->index) + ": " + e.what());
    }
    trace.states.push_back(std::move(*current));
    current.reset();
    body.clear();
  };

  for (std::string_view line : split_lines(trace_block)) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (auto back = match_back_to_state(line)) {
      finish();
      trace.lasso_start = *back;
      continue;
    }
    if (auto header = match_header(line)) {
      finish();
      if (trim(header->label) == "Stuttering") {
        trace.lasso_start = header->index - 1;
        continue;
      }
      current = TraceState{};
      current->index = header->index;
      split_action_label(header->label, *current);
      continue;
    }
    if (!current) {
      if (trim(line).empty()) continue;
      throw Error(ErrorCode::MalformedTrace, "text before the first state header: " + std::string(line));
    }
    body += line;
    body += '\n';
  }
  finish();

  if (trace.states.empty()) throw Error(ErrorCode::MalformedTrace, "trace has no states");
  for (std::size_t i = 0; i < trace.states.size(); ++i) {
    if (trace.states[i].index != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::MalformedTrace,
                  "state indices are not contiguous: expected " + std::to_string(i + 1) + ", got " +
                      std::to_string(trace.states[i].index));
    }
  }
  if (trace.lasso_start &&
      (*trace.lasso_start < 1 || *trace.lasso_start > static_cast<int>(trace.states.size()))) {
    throw Error(ErrorCode::MalformedTrace, "lasso start outside the trace");
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Tool output

namespace {

std::optional<std::pair<int, int>> parse_start_marker(std::string_view header) {
  // header is "<code>:<severity>"
  auto colon = header.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto code = to_int(header.substr(0, colon));
  auto severity = to_int(header.substr(colon + 1));
  if (!code || !severity) return std::nullopt;
  return std::pair(*code, *severity);
}

void extract_stats(ToolOutput& out) {
  static const std::regex final_stats(R"(([\d,]+) states generated, ([\d,]+) distinct states found)");
  static const std::regex progress(
      R"(([\d,]+) states generated \([^)]*\), ([\d,]+) distinct states found)");
  static const std::regex depth(R"(depth of the complete state graph search is ([\d,]+))");
  std::smatch m;
  bool have_final = false;
  for (const auto& msg : out.messages) {
    if (msg.code == 2199 && std::regex_search(msg.body, m, final_stats)) {
      out.stats.states_generated = to_count(m[1].str());
      out.stats.distinct_states = to_count(m[2].str());
      out.stats.populated = true;
      have_final = true;
    } else if (msg.code == 2200 && !have_final && std::regex_search(msg.body, m, progress)) {
      out.stats.states_generated = to_count(m[1].str());
      out.stats.distinct_states = to_count(m[2].str());
      out.stats.populated = true;
    } else if (msg.code == 2194 && std::regex_search(msg.body, m, depth)) {
      out.stats.depth = to_count(m[1].str());
    }
  }
}

std::string sany_diagnostics(const std::string& unframed) {
  for (std::string_view banner : {"***Parse Error***", "Semantic errors:"}) {
    auto pos = unframed.find(banner);
    if (pos != std::string::npos) return trim(unframed.substr(pos));
  }
  return {};
}

std::optional<std::string> property_name_of(const std::string& body) {
  static const std::regex re(R"((?:Invariant|[Pp]roperty) (\S+) is violated)");
  std::smatch m;
  if (std::regex_search(body, m, re)) return m[1].str();
  return std::nullopt;
}

}  // namespace

ToolOutput parse_tool_output(std::string_view raw, const MessageClassifier& classifier) {
  ToolOutput out;
  std::size_t pos = 0;
  bool framed = false;
  while (pos < raw.size()) {
    auto start = raw.find(kStartMarker, pos);
    if (start == std::string_view::npos) {
      out.unframed_text.append(raw.substr(pos));
      break;
    }
    out.unframed_text.append(raw.substr(pos, start - pos));
    auto header_begin = start + kStartMarker.size();
    auto header_end = raw.find(kMarkerTail, header_begin);
    auto line_end = raw.find('\n', header_begin);
    std::optional<std::pair<int, int>> header;
    if (header_end != std::string_view::npos && (line_end == std::string_view::npos || header_end < line_end)) {
      header = parse_start_marker(raw.substr(header_begin, header_end - header_begin));
    }
    if (!header) {
      // Not a real marker; keep it as plain text.
      out.unframed_text.append(raw.substr(start, kStartMarker.size()));
      pos = header_begin;
      continue;
    }
    framed = true;
    auto body_begin = header_end + kMarkerTail.size();
    if (body_begin < raw.size() && raw[body_begin] == '\n') ++body_begin;
    auto end = raw.find(kEndMarker, body_begin);
    TlcMessage msg;
    msg.code = header->first;
    msg.severity = header->second;
    if (end == std::string_view::npos) {
      msg.body = rtrim(std::string(raw.substr(body_begin)));
      out.messages.push_back(std::move(msg));
      break;
    }
    msg.body = rtrim(std::string(raw.substr(body_begin, end - body_begin)));
    out.messages.push_back(std::move(msg));
    auto end_line = raw.find('\n', end);
    pos = end_line == std::string_view::npos ? raw.size() : end_line + 1;
  }
  if (!framed) {
    throw Error(ErrorCode::UnrecognizedFraming, "no tool-mode message frames in checker output");
  }

  extract_stats(out);

  // Trace frames, verbatim.
  std::string trace_block;
  std::string nested_locations;
  for (const auto& msg : out.messages) {
    if (msg.code == 2216 || msg.code == 2217 || msg.code == 2218 || msg.code == 2122) {
      if (!trace_block.empty()) trace_block += "\n\n";
      trace_block += msg.body;
    } else if (msg.code == 2103) {
      nested_locations += msg.body + "\n";
    }
  }

  const TlcMessage* primary = nullptr;
  std::optional<ErrorCategory> category;
  for (const auto& msg : out.messages) {
    if (auto c = classifier.classify(msg)) {
      primary = &msg;
      category = c;
      break;
    }
  }

  if (primary) {
    TlcError error;
    error.category = *category;
    error.message = primary->body;
    const std::string sany = sany_diagnostics(out.unframed_text);
    if (error.category == ErrorCategory::ParseError &&
        out.unframed_text.find("Semantic errors:") != std::string::npos) {
      error.category = ErrorCategory::SemanticError;
    }
    std::string module;
    {
      static const std::regex module_re(R"((?:In module|Could not parse module) (\w+))");
      std::smatch m;
      if (std::regex_search(out.unframed_text, m, module_re)) module = m[1].str();
    }
    if (error.category == ErrorCategory::ParseError || error.category == ErrorCategory::SemanticError) {
      if (!sany.empty()) error.message += "\n" + sany;
      error.locations = find_locations(sany, module);
    }
    for (auto& loc : find_locations(primary->body, module)) {
      if (std::find(error.locations.begin(), error.locations.end(), loc) == error.locations.end()) {
        error.locations.push_back(std::move(loc));
      }
    }
    for (auto& loc : find_locations(nested_locations, module)) {
      if (std::find(error.locations.begin(), error.locations.end(), loc) == error.locations.end()) {
        error.locations.push_back(std::move(loc));
      }
    }
    if (error.category == ErrorCategory::InvariantViolation ||
        error.category == ErrorCategory::TemporalViolation) {
      error.property_name = property_name_of(primary->body);
    }
    // "Invariant X is violated by the initial state:" carries its state inline.
    if (primary->code == 2107 && trace_block.empty()) {
      auto nl = primary->body.find('\n');
      if (nl != std::string::npos) {
        trace_block = "1: <Initial predicate>\n" + primary->body.substr(nl + 1);
      }
    }
    if (!trace_block.empty()) {
      try {
        error.trace = parse_trace(trace_block);
      } catch (const Error& e) {
        error.message += std::string("\n(trace unreadable: ") + e.what() + ")";
      }
    }
    // Violations without a usable trace or property name cannot be acted on.
    if (is_violation(error.category) && !error.trace) error.category = ErrorCategory::Unknown;
    if (error.category == ErrorCategory::InvariantViolation && !error.property_name) {
      error.category = ErrorCategory::Unknown;
    }
    out.error = std::move(error);
  }
  if (!trace_block.empty()) out.trace_block = std::move(trace_block);
  return out;
}

// ---------------------------------------------------------------------------
// Dot dumps

namespace {

enum class Tok { Id, Quoted, LBrace, RBrace, LBracket, RBracket, Equals, Semi, Comma, Arrow, End };

struct Token {
  Tok kind;
  std::string text;
};

class DotLexer {
 public:
  explicit DotLexer(std::string_view text) : text_(text) {}

  // Throws DotParseFailure on garbage; at end of input returns Tok::End.
  Token next() {
    skip_space();
    if (pos_ >= text_.size()) return {Tok::End, {}};
    char c = text_[pos_];
    switch (c) {
      case '{': ++pos_; return {Tok::LBrace, "{"};
      case '}': ++pos_; return {Tok::RBrace, "}"};
      case '[': ++pos_; return {Tok::LBracket, "["};
      case ']': ++pos_; return {Tok::RBracket, "]"};
      case '=': ++pos_; return {Tok::Equals, "="};
      case ';': ++pos_; return {Tok::Semi, ";"};
      case ',': ++pos_; return {Tok::Comma, ","};
      case '"': return quoted();
      default: break;
    }
    if (c == '-' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
      pos_ += 2;
      return {Tok::Arrow, "->"};
    }
    if (is_id_char(c)) {
      std::size_t begin = pos_;
      while (pos_ < text_.size() && is_id_char(text_[pos_])) {
        if (text_[pos_] == '-' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') break;
        ++pos_;
      }
      return {Tok::Id, std::string(text_.substr(begin, pos_ - begin))};
    }
    throw Error(ErrorCode::DotParseFailure,
                "unexpected character '" + std::string(1, c) + "' at offset " + std::to_string(pos_));
  }

 private:
  static bool is_id_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  }

  void skip_space() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (text_.substr(pos_, 2) == "//" || (c == '#' && (pos_ == 0 || text_[pos_ - 1] == '\n'))) {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (text_.substr(pos_, 2) == "/*") {
        auto end = text_.find("*/", pos_ + 2);
        pos_ = end == std::string_view::npos ? text_.size() : end + 2;
      } else {
        break;
      }
    }
  }

  Token quoted() {
    std::string out;
    ++pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_++];
      if (c == '"') return {Tok::Quoted, std::move(out)};
      if (c == '\\' && pos_ < text_.size()) {
        char n = text_[pos_++];
        switch (n) {
          case '\\': out += '\\'; break;
          case '"': out += '"'; break;
          case 'n':
          case 'l':
          case 'r': out += '\n'; break;
          case '\n': break;  // line continuation
          default:
            out += '\\';
            out += n;
        }
        continue;
      }
      out += c;
    }
    throw Error(ErrorCode::DotParseFailure, "unterminated quoted string");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

using Attributes = std::map<std::string, std::string>;

struct RawEdge {
  std::string from;
  std::string to;
  Attributes attrs;
};

class DotParser {
 public:
  DotParser(std::string_view text, DotParseMode mode) : lexer_(text), mode_(mode) { advance(); }

  void parse() {
    if (peek_.kind == Tok::Id && peek_.text == "strict") advance();
    if (peek_.kind != Tok::Id || peek_.text != "digraph") {
      throw Error(ErrorCode::DotParseFailure, "input is not a digraph");
    }
    advance();
    if (peek_.kind == Tok::Id || peek_.kind == Tok::Quoted) advance();
    expect(Tok::LBrace);
    statements();
    if (peek_.kind == Tok::End) {
      if (mode_ == DotParseMode::Partial) return;
      throw Error(ErrorCode::DotParseFailure, "unbalanced braces: graph body never closed");
    }
    expect(Tok::RBrace);
    if (peek_.kind != Tok::End) throw Error(ErrorCode::DotParseFailure, "trailing content after graph");
  }

  std::vector<std::pair<std::string, Attributes>> nodes;  // declaration order, merged
  std::vector<RawEdge> edges;

 private:
  void advance() { peek_ = lexer_.next(); }

  void expect(Tok kind) {
    if (peek_.kind != kind) {
      throw Error(ErrorCode::DotParseFailure,
                  peek_.kind == Tok::End ? "unexpected end of input"
                                         : "unexpected token '" + peek_.text + "'");
    }
    advance();
  }

  bool is_id() const { return peek_.kind == Tok::Id || peek_.kind == Tok::Quoted; }

  void statements() {
    while (peek_.kind != Tok::RBrace && peek_.kind != Tok::End) {
      statement();
      while (peek_.kind == Tok::Semi) advance();
    }
  }

  void block() {
    expect(Tok::LBrace);
    statements();
    if (peek_.kind == Tok::End && mode_ == DotParseMode::Partial) return;
    expect(Tok::RBrace);
  }

  Attributes attr_lists() {
    Attributes attrs;
    while (peek_.kind == Tok::LBracket) {
      advance();
      while (peek_.kind != Tok::RBracket) {
        if (!is_id()) throw Error(ErrorCode::DotParseFailure, "malformed attribute list");
        std::string key = peek_.text;
        advance();
        std::string value = "true";
        if (peek_.kind == Tok::Equals) {
          advance();
          if (!is_id()) throw Error(ErrorCode::DotParseFailure, "attribute " + key + " has no value");
          value = peek_.text;
          advance();
        }
        attrs[key] = value;
        if (peek_.kind == Tok::Comma || peek_.kind == Tok::Semi) advance();
      }
      advance();
    }
    return attrs;
  }

  void declare(const std::string& id, const Attributes& attrs) {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const auto& n) { return n.first == id; });
    if (it == nodes.end()) {
      nodes.emplace_back(id, attrs);
    } else {
      for (const auto& [k, v] : attrs) it->second[k] = v;
    }
  }

  void statement() {
    if (peek_.kind == Tok::LBrace) {
      block();
      return;
    }
    if (peek_.kind == Tok::Id && peek_.text == "subgraph") {
      advance();
      if (is_id()) advance();
      block();
      return;
    }
    if (peek_.kind == Tok::Id && (peek_.text == "graph" || peek_.text == "node" || peek_.text == "edge")) {
      advance();
      attr_lists();
      return;
    }
    if (!is_id()) throw Error(ErrorCode::DotParseFailure, "unexpected token '" + peek_.text + "'");
    std::string first = peek_.text;
    advance();
    if (peek_.kind == Tok::Equals) {  // graph attribute
      advance();
      if (!is_id()) throw Error(ErrorCode::DotParseFailure, "graph attribute " + first + " has no value");
      advance();
      return;
    }
    std::vector<std::string> chain{first};
    while (peek_.kind == Tok::Arrow) {
      advance();
      if (!is_id()) throw Error(ErrorCode::DotParseFailure, "edge without a target");
      chain.push_back(peek_.text);
      advance();
    }
    Attributes attrs = attr_lists();
    if (chain.size() == 1) {
      declare(first, attrs);
      return;
    }
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) edges.push_back({chain[i], chain[i + 1], attrs});
  }

  DotLexer lexer_;
  DotParseMode mode_;
  Token peek_{Tok::End, {}};
};

Fingerprint node_id(const std::string& text) {
  auto fp = Fingerprint::parse(text);
  if (!fp) throw Error(ErrorCode::DotParseFailure, "node id is not a fingerprint: " + text);
  return *fp;
}

}  // namespace

StateGraph parse_dot_graph(std::string_view dot_text, DotParseMode mode) {
  DotParser parser(dot_text, mode);
  if (mode == DotParseMode::Strict) {
    parser.parse();
  } else {
    try {
      parser.parse();
    } catch (const Error&) {
      // keep whatever complete statements were read before the damage
    }
  }

  StateGraph graph;
  bool any_marker = false;
  for (const auto& [id_text, attrs] : parser.nodes) {
    Fingerprint id;
    try {
      id = node_id(id_text);
    } catch (const Error&) {
      if (mode == DotParseMode::Strict) throw;
      continue;
    }
    StateNode node;
    if (auto label = attrs.find("label"); label != attrs.end()) {
      try {
        node.bindings = parse_state_block(label->second);
      } catch (const Error& e) {
        if (mode == DotParseMode::Strict) {
          throw Error(ErrorCode::DotParseFailure, "node " + id_text + ": " + e.what());
        }
      }
    }
    if (auto style = attrs.find("style"); style != attrs.end() &&
                                          style->second.find("filled") != std::string::npos) {
      node.is_initial = true;
      any_marker = true;
    }
    graph.nodes[id] = std::move(node);
  }

  for (const auto& raw : parser.edges) {
    auto label = raw.attrs.find("label");
    auto style = raw.attrs.find("style");
    if (label == raw.attrs.end() && style != raw.attrs.end() && style->second == "dashed") {
      continue;  // stuttering step
    }
    std::optional<Fingerprint> from, to;
    try {
      from = node_id(raw.from);
      to = node_id(raw.to);
    } catch (const Error&) {
      if (mode == DotParseMode::Strict) throw;
      continue;
    }
    if (!graph.contains(*from) || !graph.contains(*to)) {
      if (mode == DotParseMode::Partial) continue;
      throw Error(ErrorCode::DanglingEdge,
                  "edge " + raw.from + " -> " + raw.to + " references an undeclared node");
    }
    graph.edges.push_back({*from, *to, label == raw.attrs.end() ? std::string{} : label->second});
  }

  if (any_marker) {
    for (const auto& [id, node] : graph.nodes) {
      if (node.is_initial) graph.initial_ids.push_back(id);
    }
  } else {
    std::set<Fingerprint> has_in;
    for (const auto& e : graph.edges) has_in.insert(e.to);
    for (const auto& [id, node] : graph.nodes) {
      if (!has_in.contains(id)) graph.initial_ids.push_back(id);
    }
  }
  graph.refresh_flags();
  return graph;
}

}  // namespace twb
