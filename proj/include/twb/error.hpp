#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twb {

// Every failure the library reports carries one of these codes. The code
// name is what ends up in HTTP error bodies and CLI diagnostics.
enum class ErrorCode {
  InvalidArgument,
  IoFailure,
  Cancelled,
  Interrupted,  // job was active when the service stopped
  // runner
  MissingModuleHeader,
  RuntimeMissing,
  Timeout,
  CheckerCrashed,
  UnknownRunId,
  // tlc_parser
  UnrecognizedFraming,
  MalformedTrace,
  MalformedBinding,
  MalformedLocation,
  DotParseFailure,
  DanglingEdge,
  // graph_core
  UnknownNode,
  UnknownTree,
  TraceStateUnmatched,
  // llm_gateway
  InvalidConfig,
  AuthFailure,
  RateLimited,
  Unavailable,
  MalformedResponse,
  ProviderRejected,
  // digest_engine
  SelectionOutOfRange,
  MissingGraph,
  // repair_engine
  NoError,
  PatchExtractFailed,
  ModuleNameMismatch,
  // service
  UnknownSession,
  UnknownRun,
  UnknownDigest,
  UnknownRepair,
  SpecMissing,
  ConcurrentRun,
  ConcurrentRepair,
  NotAProposal,
};

std::string_view code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace twb
