#pragma once

#include <stdexcept>
#include <string>

namespace gridhedge {

enum class ErrorKind {
  NotPositiveDefinite,
  InvalidHorizon,
  DegenerateVolatility,
  NonPositiveSample,
  SeriesTooShort,
  TooFewBins,
  EmptySample,
  NonPositiveGeneration,
  TimeOutOfRange,
  InfeasibleCalibration,
  TreeTooLarge,
  LengthMismatch,
  MalformedTree,
  InvalidAlpha,
  InsufficientPaths,
  InvalidArgument,
  MalformedInput,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gridhedge
