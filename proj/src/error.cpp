#include "twb/error.hpp"

namespace twb {

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::Cancelled: return "Cancelled";
    case ErrorCode::Interrupted: return "Interrupted";
    case ErrorCode::MissingModuleHeader: return "MissingModuleHeader";
    case ErrorCode::RuntimeMissing: return "RuntimeMissing";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::CheckerCrashed: return "CheckerCrashed";
    case ErrorCode::UnknownRunId: return "UnknownRunId";
    case ErrorCode::UnrecognizedFraming: return "UnrecognizedFraming";
    case ErrorCode::MalformedTrace: return "MalformedTrace";
    case ErrorCode::MalformedBinding: return "MalformedBinding";
    case ErrorCode::MalformedLocation: return "MalformedLocation";
    case ErrorCode::DotParseFailure: return "DotParseFailure";
    case ErrorCode::DanglingEdge: return "DanglingEdge";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownTree: return "UnknownTree";
    case ErrorCode::TraceStateUnmatched: return "TraceStateUnmatched";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::Unavailable: return "Unavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::ProviderRejected: return "ProviderRejected";
    case ErrorCode::SelectionOutOfRange: return "SelectionOutOfRange";
    case ErrorCode::MissingGraph: return "MissingGraph";
    case ErrorCode::NoError: return "NoError";
    case ErrorCode::PatchExtractFailed: return "PatchExtractFailed";
    case ErrorCode::ModuleNameMismatch: return "ModuleNameMismatch";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::UnknownDigest: return "UnknownDigest";
    case ErrorCode::UnknownRepair: return "UnknownRepair";
    case ErrorCode::SpecMissing: return "SpecMissing";
    case ErrorCode::ConcurrentRun: return "ConcurrentRun";
    case ErrorCode::ConcurrentRepair: return "ConcurrentRepair";
    case ErrorCode::NotAProposal: return "NotAProposal";
  }
  return "Unknown";
}

}  // namespace twb
