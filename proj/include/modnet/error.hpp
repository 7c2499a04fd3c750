#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace modnet {

enum class ErrorCode {
  kInvalidInput,
  kDegenerateStation,
  kInfeasibleSplit,
  kBadTopology,
  kSingularChain,
  kZeroRate,
  kOverflow,
  kStateSpaceTooLarge,
  kInfeasible,
  kNoProgress,
  kInfeasibleStart,
  kNotReachedWithinBounds,
  kIoError,
  kEmptyWindow,
  kTooFewPoints,
  kDisconnectedDemand,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` names the
// failure so callers (and the CLI) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace modnet
