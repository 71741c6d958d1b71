#include "edgellm/error.hpp"

namespace edgellm {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigSyntax: return "ConfigSyntax";
    case ErrorCode::DuplicateModel: return "DuplicateModel";
    case ErrorCode::ClassMismatch: return "ClassMismatch";
    case ErrorCode::IncompleteEndpoint: return "IncompleteEndpoint";
    case ErrorCode::InvalidParamCount: return "InvalidParamCount";
    case ErrorCode::ModelNotFound: return "ModelNotFound";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::ClockSkew: return "ClockSkew";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::Cancelled: return "Cancelled";
    case ErrorCode::CapabilityMissing: return "CapabilityMissing";
    case ErrorCode::NonPositiveDuration: return "NonPositiveDuration";
    case ErrorCode::EmptyPhase: return "EmptyPhase";
    case ErrorCode::DegenerateTiming: return "DegenerateTiming";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ZeroMeanCV: return "ZeroMeanCV";
    case ErrorCode::TargetGone: return "TargetGone";
    case ErrorCode::InvalidMetricName: return "InvalidMetricName";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::DatasetSyntax: return "DatasetSyntax";
    case ErrorCode::DuplicateConversation: return "DuplicateConversation";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::ModelRunFailed: return "ModelRunFailed";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedItem: return "MalformedItem";
  }
  return "Unknown";
}

}  // namespace edgellm
