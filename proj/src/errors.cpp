#include "automerge/errors.hpp"

namespace automerge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::ZeroVolume: return "ZeroVolume";
    case ErrorCode::DisconnectedCluster: return "DisconnectedCluster";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::InfeasibleOverlapPlan: return "InfeasibleOverlapPlan";
    case ErrorCode::OutOfOrderKeyframe: return "OutOfOrderKeyframe";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::MissingInput: return "MissingInput";
  }
  return "Unknown";
}

}  // namespace automerge
