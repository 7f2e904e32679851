#include "twb/repair_engine.hpp"

#include <set>

#include "twb/error.hpp"
#include "twb/io.hpp"
#include "twb/text.hpp"

namespace twb {

namespace {

constexpr std::string_view kSystemPrompt =
#include "repair_system.inc"
    ;

std::string fenced(std::string_view lang, std::string_view body) {
  std::string out = "```" + std::string(lang) + "\n" + std::string(body);
  if (out.back() != '\n') out += '\n';
  return out + "```\n";
}

std::string first_line(std::string_view text) {
  auto t = trim(text);
  auto nl = t.find('\n');
  return nl == std::string::npos ? t : t.substr(0, nl);
}

void render_trace_state(std::string& out, const TraceState& s) {
  out += "State " + std::to_string(s.index) + ": <" + s.action_label + ">\n";
  out += render_state_block(s.bindings);
}

std::string feedback(const RepairAttempt& a) {
  std::string n = "Attempt " + std::to_string(a.index);
  switch (a.patch_status) {
    case PatchStatus::ExtractFailed:
      return n + ": the reply contained no fenced code block, so nothing was applied; return one fenced code block "
                 "containing the complete module.";
    case PatchStatus::NameMismatch:
      return n + ": the returned module was rejected (" + a.patch_error +
             "); keep the original MODULE header line unchanged.";
    case PatchStatus::Applied:
      break;
  }
  if (a.repeated_spec) {
    return n + ": the returned module is identical to a version that was already tried; make a different change.";
  }
  if (a.verdict == Verdict::StillFailing && a.recheck && a.recheck->error) {
    const TlcError& e = *a.recheck->error;
    std::string what = std::string(category_name(e.category));
    if (e.property_name) what += " of " + *e.property_name;
    return n + ": the revised module was checked with TLC and still fails with " + what + ": " +
           first_line(e.message);
  }
  if (a.verdict == Verdict::Clean) return n + ": the revised module passed TLC.";
  return n + ": the revised module was not checked.";
}

}  // namespace

std::string_view patch_status_name(PatchStatus s) noexcept {
  switch (s) {
    case PatchStatus::Applied: return "applied";
    case PatchStatus::ExtractFailed: return "extract_failed";
    case PatchStatus::NameMismatch: return "name_mismatch";
  }
  return "extract_failed";
}

std::string_view verdict_name(Verdict v) noexcept {
  switch (v) {
    case Verdict::Clean: return "clean";
    case Verdict::StillFailing: return "still_failing";
    case Verdict::NotRun: return "not_run";
  }
  return "not_run";
}

std::string_view repair_mode_name(RepairMode m) noexcept {
  return m == RepairMode::SinglePass ? "single_pass" : "multi_pass";
}

std::optional<RepairMode> repair_mode_from_name(std::string_view name) noexcept {
  if (name == "single_pass" || name == "single") return RepairMode::SinglePass;
  if (name == "multi_pass" || name == "multi") return RepairMode::MultiPass;
  return std::nullopt;
}

std::string_view final_status_name(FinalStatus s) noexcept {
  switch (s) {
    case FinalStatus::Success: return "success";
    case FinalStatus::LimitReached: return "limit_reached";
    case FinalStatus::NoProgress: return "no_progress";
    case FinalStatus::PatchFailed: return "patch_failed";
    case FinalStatus::Aborted: return "aborted";
  }
  return "aborted";
}

RepairContext extract_error_context(const TlcRunResult& result, std::string_view spec_text,
                                    std::string_view cfg_text, const DefinitionIndex& index) {
  if (!result.error) throw Error(ErrorCode::NoError, "the run reported no error; nothing to repair");
  const TlcError& error = *result.error;
  RepairContext ctx;
  ctx.category = error.category;
  ctx.message = error.message;
  ctx.property_name = error.property_name;
  ctx.spec_text = spec_text;
  ctx.cfg_text = cfg_text;

  if (error.trace) {
    const auto& states = error.trace->states;
    ctx.trace_length = states.size();
    if (states.size() > 2 * kTraceKeep) {
      ctx.trace_head.assign(states.begin(), states.begin() + kTraceKeep);
      ctx.trace_tail.assign(states.end() - kTraceKeep, states.end());
    } else {
      ctx.trace_head = states;
    }
  }

  std::set<std::pair<int, int>> seen;
  auto add = [&](std::string label, const SourceLocation& loc) {
    if (!loc.module.empty() && loc.module != index.module) return;
    if (!seen.insert({loc.start_line, loc.end_line}).second) return;
    std::string text = excerpt_lines(spec_text, loc);
    if (text.empty()) return;
    ctx.implicated_source.push_back({std::move(label), loc, std::move(text)});
  };
  for (const auto& loc : error.locations) add("reported location", loc);
  if (is_violation(error.category) && error.trace && !error.trace->states.empty()) {
    const TraceState& last = error.trace->states.back();
    if (auto loc = resolve_action(index, last.action_label)) {
      add("action " + trim(last.action_label.substr(0, last.action_label.find('('))), *loc);
    } else if (last.action_location) {
      add("action " + last.action_label, *last.action_location);
    }
  }
  return ctx;
}

Conversation build_repair_prompt(const RepairContext& context, const std::vector<RepairAttempt>& prior_attempts) {
  std::string user = "The TLA+ module below fails model checking with TLC.\n\n## Current module\n\n" +
                     fenced("tla", context.spec_text) + "\n## Model configuration\n\n" + fenced("", context.cfg_text);
  user += "\n## TLC report\n\nCategory: " + std::string(category_name(context.category)) + "\n";
  if (context.property_name) user += "Property: " + *context.property_name + "\n";
  user += "Message:\n" + trim(context.message) + "\n";

  if (context.trace_length > 0) {
    user += "\n## Counterexample trace (" + std::to_string(context.trace_length) + " states)\n\n";
    for (const auto& s : context.trace_head) render_trace_state(user, s);
    if (context.trace_elided()) {
      user += "... " + std::to_string(context.trace_length - context.trace_head.size() - context.trace_tail.size()) +
              " states omitted ...\n";
      for (const auto& s : context.trace_tail) render_trace_state(user, s);
    }
  }
  if (!context.implicated_source.empty()) {
    user += "\n## Source involved\n";
    for (const auto& ex : context.implicated_source) {
      user += "\n" + ex.label + ", lines " + std::to_string(ex.location.start_line) + "-" +
              std::to_string(ex.location.end_line) + ":\n" + fenced("tla", ex.text);
    }
  }
  if (!prior_attempts.empty()) {
    user += "\n## Previous attempts\n\n";
    for (const auto& a : prior_attempts) user += feedback(a) + "\n\n";
    user.pop_back();
  }
  Conversation conversation;
  conversation.messages.push_back({Role::System, std::string(kSystemPrompt)});
  conversation.messages.push_back({Role::User, std::move(user)});
  return conversation;
}

std::string apply_patch(std::string_view spec_text, std::string_view response) {
  auto lines = split_lines(response);
  std::size_t open = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (starts_with(ltrim_view(lines[i]), "```")) {
      open = i;
      break;
    }
  }
  std::size_t close = lines.size();
  for (std::size_t i = open + 1; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    if (starts_with(t, "```") && t.find_first_not_of('`') == std::string::npos) {
      close = i;
      break;
    }
  }
  if (open == lines.size() || close == lines.size()) {
    throw Error(ErrorCode::PatchExtractFailed, "response contains no complete fenced code block");
  }
  std::string block;
  for (std::size_t i = open + 1; i < close; ++i) {
    block += lines[i];
    block += '\n';
  }
  auto expected = find_module_name(spec_text);
  auto actual = find_module_name(block);
  if (!actual) throw Error(ErrorCode::ModuleNameMismatch, "patched module has no MODULE header");
  if (!expected || *actual != *expected) {
    throw Error(ErrorCode::ModuleNameMismatch,
                "patched module is named " + *actual + ", expected " + expected.value_or("<none>"));
  }
  if (!spec_text.empty() && spec_text.back() != '\n') block.pop_back();
  return block;
}

RepairAttempt single_pass(std::string_view spec_text, std::string_view cfg_text, const TlcRunResult& result,
                          const LlmConfig& config, LlmClient& client, const std::vector<RepairAttempt>& prior_attempts) {
  RepairAttempt attempt;
  attempt.index = static_cast<int>(prior_attempts.size()) + 1;
  attempt.input_spec_hash = sha256_hex(spec_text);
  auto context = extract_error_context(result, spec_text, cfg_text, index_definitions(spec_text));
  attempt.prompt = build_repair_prompt(context, prior_attempts);
  attempt.response = client.chat(attempt.prompt, config);
  try {
    attempt.patched_spec = apply_patch(spec_text, attempt.response);
    attempt.output_spec_hash = sha256_hex(*attempt.patched_spec);
    attempt.patch_status = PatchStatus::Applied;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::PatchExtractFailed) {
      attempt.patch_status = PatchStatus::ExtractFailed;
    } else if (e.code() == ErrorCode::ModuleNameMismatch) {
      attempt.patch_status = PatchStatus::NameMismatch;
    } else {
      throw;
    }
    attempt.patch_error = e.what();
  }
  attempt.verdict = Verdict::NotRun;
  return attempt;
}

RepairSession multi_pass(const std::string& spec_text, const std::string& cfg_text, int limit,
                         const LlmConfig& config, LlmClient& client, const MultiPassHooks& hooks) {
  if (limit < 1) throw Error(ErrorCode::InvalidArgument, "repair limit must be positive");
  if (!hooks.check) throw Error(ErrorCode::InvalidArgument, "multi_pass needs a checker hook");

  RepairSession session;
  session.mode = RepairMode::MultiPass;
  session.max_passes = limit;
  session.original_spec_hash = sha256_hex(spec_text);

  auto cancelled = [&] { return hooks.cancel && hooks.cancel->load(); };
  auto finish = [&](RepairAttempt attempt) {
    if (hooks.persist_attempt) hooks.persist_attempt(attempt);
    session.attempts.push_back(std::move(attempt));
  };
  auto check = [&](const std::string& spec) {
    ++session.checker_runs;
    TlcRunResult r = hooks.check(spec, cfg_text);
    if (r.status == RunStatus::Cancelled) throw Error(ErrorCode::Cancelled, "checker run was cancelled");
    return r;
  };

  try {
    if (cancelled()) throw Error(ErrorCode::Cancelled, "repair cancelled");
    std::string current = spec_text;
    TlcRunResult result = check(current);
    if (result.clean()) {
      session.final_status = FinalStatus::Success;
      session.final_spec = current;
      return session;
    }
    std::set<std::string> seen;
    for (int n = 1; n <= limit; ++n) {
      if (cancelled()) throw Error(ErrorCode::Cancelled, "repair cancelled");
      seen.insert(sha256_hex(current));
      RepairAttempt attempt = single_pass(current, cfg_text, result, config, client, session.attempts);
      if (attempt.patch_status != PatchStatus::Applied) {
        finish(std::move(attempt));
        continue;
      }
      if (hooks.detect_no_progress && seen.contains(*attempt.output_spec_hash)) {
        attempt.repeated_spec = true;
        finish(std::move(attempt));
        session.final_status = n == limit ? FinalStatus::LimitReached : FinalStatus::NoProgress;
        return session;
      }
      seen.insert(*attempt.output_spec_hash);
      if (cancelled()) {
        finish(std::move(attempt));
        throw Error(ErrorCode::Cancelled, "repair cancelled");
      }
      attempt.recheck = check(*attempt.patched_spec);
      attempt.verdict = attempt.recheck->clean() ? Verdict::Clean : Verdict::StillFailing;
      current = *attempt.patched_spec;
      result = *attempt.recheck;
      bool clean = attempt.verdict == Verdict::Clean;
      finish(std::move(attempt));
      if (clean) {
        session.final_status = FinalStatus::Success;
        session.final_spec = current;
        return session;
      }
    }
    session.final_status = FinalStatus::LimitReached;
  } catch (const Error& e) {
    session.final_status = FinalStatus::Aborted;
    session.error = {e.code(), e.what()};
  }
  return session;
}

Json repair_attempt_to_json(const RepairAttempt& attempt) {
  Json doc;
  doc["index"] = attempt.index;
  doc["input_spec_hash"] = attempt.input_spec_hash;
  doc["prompt"] = attempt.prompt.to_json();
  doc["response"] = attempt.response;
  doc["patch_status"] = std::string(patch_status_name(attempt.patch_status));
  doc["patch_error"] = attempt.patch_error.empty() ? Json(nullptr) : Json(attempt.patch_error);
  doc["output_spec_hash"] = attempt.output_spec_hash ? Json(*attempt.output_spec_hash) : Json(nullptr);
  doc["patched_spec"] = attempt.patched_spec ? Json(*attempt.patched_spec) : Json(nullptr);
  doc["recheck"] = attempt.recheck ? run_result_to_json(*attempt.recheck) : Json(nullptr);
  doc["verdict"] = std::string(verdict_name(attempt.verdict));
  doc["repeated_spec"] = attempt.repeated_spec;
  return doc;
}

}  // namespace twb
