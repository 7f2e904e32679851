#include "twb/digest_engine.hpp"

#include <regex>

#include "twb/error.hpp"
#include "twb/text.hpp"

namespace twb {

namespace {

constexpr std::string_view kSystemPrompt =
#include "digest_system.inc"
    ;

std::string fenced(std::string_view lang, std::string_view body) {
  std::string out = "```" + std::string(lang) + "\n" + std::string(body);
  if (out.back() != '\n') out += '\n';
  return out + "```\n";
}

std::string* section_slot(DigestSections& s, const std::string& lower) {
  if (lower == "overview") return &s.overview;
  if (lower == "variables") return &s.variables;
  if (lower == "constants") return &s.constants;
  if (lower == "actions") return &s.actions;
  if (lower == "transitions") return &s.transitions;
  if (lower == "invariants") return &s.invariants;
  return nullptr;
}

}  // namespace

std::string selection_excerpt(std::string_view spec_text, const LineSelection& selection) {
  auto lines = split_lines(spec_text);
  if (selection.start_line < 1 || selection.start_line > selection.end_line ||
      static_cast<std::size_t>(selection.end_line) > lines.size()) {
    throw Error(ErrorCode::SelectionOutOfRange,
                "selection " + std::to_string(selection.start_line) + ":" + std::to_string(selection.end_line) +
                    " is not within lines 1:" + std::to_string(lines.size()));
  }
  std::string out;
  for (int n = selection.start_line; n <= selection.end_line; ++n) {
    out += lines[n - 1];
    out += '\n';
  }
  return out;
}

Conversation build_digest_prompt(const DigestRequest& request, const StructuralSummary& summary) {
  std::optional<std::string> excerpt;
  if (request.selection) excerpt = selection_excerpt(request.spec_text, *request.selection);

  std::string user = "Explain this TLA+ model.\n\n## Specification\n\n" + fenced("tla", request.spec_text) +
                     "\n## Model configuration\n\n" + fenced("", request.cfg_text) +
                     "\n## State graph summary\n\n" + fenced("json", summary_to_json(summary, kDigestSummaryLimits).dump(2));
  user += "\nInitial states:\n";
  for (const auto& s : summary.initial_states) user += "- " + render_state_inline(s.bindings) + "\n";
  user += "\nTerminal states:\n";
  if (summary.terminal_states.empty()) user += "- none\n";
  for (const auto& s : summary.terminal_states) user += "- " + render_state_inline(s.bindings) + "\n";
  if (excerpt) {
    user += "\n## Selected lines " + std::to_string(request.selection->start_line) + "-" +
            std::to_string(request.selection->end_line) + "\n\n" + fenced("tla", *excerpt) +
            "\nFocus the explanation on the selected lines. Cover the rest of the module only as far as it is "
            "needed to understand them.\n";
  }
  Conversation conversation;
  conversation.messages.push_back({Role::System, std::string(kSystemPrompt)});
  conversation.messages.push_back({Role::User, std::move(user)});
  return conversation;
}

DigestSections parse_sections(std::string_view response) {
  static const std::regex heading(
      R"(^\s*(?:#{1,6}\s*)?(?:\*\*)?\s*([A-Za-z]+)\s*(?:\*\*)?\s*:?\s*(?:\*\*)?\s*$)");
  DigestSections sections;
  std::string* current = &sections.overview;
  for (auto line : split_lines(response)) {
    std::string s(line);
    std::smatch m;
    if (std::regex_match(s, m, heading)) {
      std::string lower = m[1].str();
      for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (auto* slot = section_slot(sections, lower)) {
        current = slot;
        continue;
      }
    }
    *current += s;
    *current += '\n';
  }
  for (auto* field : {&sections.overview, &sections.variables, &sections.constants, &sections.actions,
                      &sections.transitions, &sections.invariants}) {
    *field = trim(*field);
  }
  return sections;
}

DigestReport run_digest(const DigestRequest& request, const StateGraph* graph, const LlmConfig& config,
                        LlmClient& client, const std::function<std::string()>& clock) {
  if (!graph) throw Error(ErrorCode::MissingGraph, "run " + request.run_id + " has no state graph");
  DigestReport report;
  report.run_id = request.run_id;
  report.summary = summarize_structure(*graph, kDigestTopK);
  report.selection = request.selection;
  if (request.selection) report.selection_echo = selection_excerpt(request.spec_text, *request.selection);
  report.prompt = build_digest_prompt(request, report.summary);
  report.response = client.chat(report.prompt, config);
  report.explanation = parse_sections(report.response);
  report.model_used = config.provider == Provider::Mock ? "mock" : config.model_name;
  report.created_at = clock();
  return report;
}

Json digest_report_to_json(const DigestReport& report) {
  Json doc;
  doc["run_id"] = report.run_id;
  doc["model_used"] = report.model_used;
  doc["created_at"] = report.created_at;
  if (report.selection) {
    Json sel;
    sel["start_line"] = report.selection->start_line;
    sel["end_line"] = report.selection->end_line;
    doc["selection"] = std::move(sel);
  } else {
    doc["selection"] = nullptr;
  }
  doc["selection_echo"] = report.selection_echo ? Json(*report.selection_echo) : Json(nullptr);
  doc["summary"] = summary_to_json(report.summary);
  Json explanation;
  explanation["overview"] = report.explanation.overview;
  explanation["variables"] = report.explanation.variables;
  explanation["constants"] = report.explanation.constants;
  explanation["actions"] = report.explanation.actions;
  explanation["transitions"] = report.explanation.transitions;
  explanation["invariants"] = report.explanation.invariants;
  doc["explanation"] = std::move(explanation);
  doc["prompt"] = report.prompt.to_json();
  doc["response"] = report.response;
  return doc;
}

}  // namespace twb
