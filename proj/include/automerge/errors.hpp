#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace automerge {

enum class ErrorCode {
  DegenerateInput,
  ZeroVector,
  DimensionMismatch,
  EmptySet,
  EmptyCloud,
  LayoutMismatch,
  EmptySequence,
  WindowTooLarge,
  ZeroVolume,
  DisconnectedCluster,
  SingularSystem,
  KeyMismatch,
  InfeasibleOverlapPlan,
  OutOfOrderKeyframe,
  InvalidArgument,
  InvalidConfig,
  MalformedInput,
  MissingInput,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. Carries the failing module name so
/// front ends can report where a pipeline broke.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& what)
      : std::runtime_error(what), code_(code), module_(std::move(module)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

}  // namespace automerge
