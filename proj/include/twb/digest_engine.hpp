#pragma once

#include <functional>
#include <optional>
#include <string>

#include "twb/documents.hpp"
#include "twb/graph_core.hpp"
#include "twb/llm_gateway.hpp"

namespace twb {

struct LineSelection {
  int start_line = 1;
  int end_line = 1;
};

struct DigestRequest {
  std::string spec_text;
  std::string cfg_text;
  std::string run_id;
  std::optional<LineSelection> selection;
};

struct DigestSections {
  std::string overview;
  std::string variables;
  std::string constants;
  std::string actions;
  std::string transitions;
  std::string invariants;
};

struct DigestReport {
  std::string run_id;
  StructuralSummary summary;
  DigestSections explanation;
  std::optional<LineSelection> selection;
  std::optional<std::string> selection_echo;
  std::string model_used;
  std::string created_at;
  Conversation prompt;
  std::string response;
};

inline constexpr std::size_t kDigestTopK = 10;
inline constexpr SummaryLimits kDigestSummaryLimits{5, 12};

// Lines start..end of the spec. Throws SelectionOutOfRange.
std::string selection_excerpt(std::string_view spec_text, const LineSelection& selection);

Conversation build_digest_prompt(const DigestRequest& request, const StructuralSummary& summary);

// Splits a response at the six headings; text before the first heading, or
// under an unknown one, goes to the overview.
DigestSections parse_sections(std::string_view response);

// Throws MissingGraph when the run produced no graph.
DigestReport run_digest(const DigestRequest& request, const StateGraph* graph, const LlmConfig& config,
                        LlmClient& client, const std::function<std::string()>& clock);

Json digest_report_to_json(const DigestReport& report);

}  // namespace twb
