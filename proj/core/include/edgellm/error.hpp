#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgellm {

enum class ErrorCode {
  // registry
  ConfigSyntax,
  DuplicateModel,
  ClassMismatch,
  IncompleteEndpoint,
  InvalidParamCount,
  ModelNotFound,
  // gateway
  InvalidRequest,
  ContextOverflow,
  ClockSkew,
  // backends
  BackendUnavailable,
  ProtocolError,
  Cancelled,
  CapabilityMissing,
  // metrics
  NonPositiveDuration,
  EmptyPhase,
  DegenerateTiming,
  EmptySample,
  NonFiniteInput,
  ZeroMeanCV,
  // resource monitor
  TargetGone,
  InvalidMetricName,
  InvalidInterval,
  // bench runner
  DatasetSyntax,
  DuplicateConversation,
  EmptyPrompt,
  ModelRunFailed,
  IoError,
  // accuracy
  MalformedItem,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries one of the codes above so
/// callers (HTTP handlers, the CLI) can map it to a status or exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace edgellm
