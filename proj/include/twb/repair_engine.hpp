#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twb/documents.hpp"
#include "twb/llm_gateway.hpp"
#include "twb/runner.hpp"
#include "twb/source_mapper.hpp"

namespace twb {

struct SourceExcerpt {
  std::string label;  // "error location", "action PickSameColorWhite", ...
  SourceLocation location;
  std::string text;   // whole lines, byte-exact from the spec
};

struct RepairContext {
  ErrorCategory category = ErrorCategory::Unknown;
  std::string message;
  std::optional<std::string> property_name;
  std::vector<TraceState> trace_head;
  std::vector<TraceState> trace_tail;  // empty unless the trace was elided
  std::size_t trace_length = 0;
  std::vector<SourceExcerpt> implicated_source;
  std::string spec_text;
  std::string cfg_text;

  bool trace_elided() const { return !trace_tail.empty(); }
};

inline constexpr std::size_t kTraceKeep = 5;

// Throws NoError when the result carries no error.
RepairContext extract_error_context(const TlcRunResult& result, std::string_view spec_text,
                                    std::string_view cfg_text, const DefinitionIndex& index);

enum class PatchStatus { Applied, ExtractFailed, NameMismatch };
enum class Verdict { Clean, StillFailing, NotRun };
enum class RepairMode { SinglePass, MultiPass };
enum class FinalStatus { Success, LimitReached, NoProgress, PatchFailed, Aborted };

std::string_view patch_status_name(PatchStatus s) noexcept;
std::string_view verdict_name(Verdict v) noexcept;
std::string_view repair_mode_name(RepairMode m) noexcept;
std::optional<RepairMode> repair_mode_from_name(std::string_view name) noexcept;
std::string_view final_status_name(FinalStatus s) noexcept;

struct RepairAttempt {
  int index = 1;
  std::string input_spec_hash;
  Conversation prompt;
  std::string response;
  PatchStatus patch_status = PatchStatus::ExtractFailed;
  std::optional<std::string> patched_spec;
  std::optional<std::string> output_spec_hash;
  std::string patch_error;  // why extraction failed, empty when applied
  std::optional<TlcRunResult> recheck;
  Verdict verdict = Verdict::NotRun;
  bool repeated_spec = false;  // candidate hash seen before; not re-checked
};

Json repair_attempt_to_json(const RepairAttempt& attempt);

Conversation build_repair_prompt(const RepairContext& context, const std::vector<RepairAttempt>& prior_attempts);

// First fenced block of the response, which must declare the same module.
// Throws PatchExtractFailed or ModuleNameMismatch.
std::string apply_patch(std::string_view spec_text, std::string_view response);

// One context -> prompt -> chat -> apply cycle. The attempt is a proposal:
// verdict not_run, nothing re-checked.
RepairAttempt single_pass(std::string_view spec_text, std::string_view cfg_text, const TlcRunResult& result,
                          const LlmConfig& config, LlmClient& client,
                          const std::vector<RepairAttempt>& prior_attempts = {});

struct RepairSession {
  RepairMode mode = RepairMode::MultiPass;
  int max_passes = 5;
  std::vector<RepairAttempt> attempts;
  std::optional<FinalStatus> final_status;
  std::optional<std::pair<ErrorCode, std::string>> error;  // set when aborted
  std::string original_spec_hash;
  std::optional<std::string> final_spec;  // the clean spec on success
  int checker_runs = 0;
};

struct MultiPassHooks {
  // Runs the checker on a candidate spec.
  std::function<TlcRunResult(const std::string& spec, const std::string& cfg)> check;
  // Called once per finished attempt, before the loop continues.
  std::function<void(const RepairAttempt&)> persist_attempt;
  const std::atomic<bool>* cancel = nullptr;
  bool detect_no_progress = true;
};

RepairSession multi_pass(const std::string& spec_text, const std::string& cfg_text, int limit,
                         const LlmConfig& config, LlmClient& client, const MultiPassHooks& hooks);

}  // namespace twb
