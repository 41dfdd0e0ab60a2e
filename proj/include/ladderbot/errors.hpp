#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ladderbot {

enum class ErrorCode {
  Unreachable,
  NoConvergence,
  NearSingular,
  MarkerBehindCamera,
  DegenerateCorners,
  NoDetection,
  CapacityExceeded,
  ZeroTotalMass,
  InsufficientSamples,
  GoalUnreachable,
  InvalidEndpoint,
  ConfigInvalid,
  IllegalTransition,
  EmptyLog,
  BindFailure,
  ProtocolViolation,
  UnknownPrompt,
  JogTooLarge,
  NotPaused,
  Unauthorized,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace ladderbot
