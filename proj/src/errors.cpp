#include "ladderbot/errors.hpp"

namespace ladderbot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NearSingular: return "NearSingular";
    case ErrorCode::MarkerBehindCamera: return "MarkerBehindCamera";
    case ErrorCode::DegenerateCorners: return "DegenerateCorners";
    case ErrorCode::NoDetection: return "NoDetection";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::ZeroTotalMass: return "ZeroTotalMass";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::GoalUnreachable: return "GoalUnreachable";
    case ErrorCode::InvalidEndpoint: return "InvalidEndpoint";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::EmptyLog: return "EmptyLog";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::UnknownPrompt: return "UnknownPrompt";
    case ErrorCode::JogTooLarge: return "JogTooLarge";
    case ErrorCode::NotPaused: return "NotPaused";
    case ErrorCode::Unauthorized: return "Unauthorized";
  }
  return "Unknown";
}

}  // namespace ladderbot
