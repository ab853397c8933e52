// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eegfmri {

enum class ErrorKind {
  ShapeMismatch,
  NumericOverflow,
  InvalidProbability,
  NotScalar,
  DisconnectedGraph,
  WindowTooLong,
  AlreadyScaled,
  InvalidFactor,
  TooFewPoints,
  ShiftNotMultiple,
  RecordingTooShort,
  NoNegativesPossible,
  NotEnoughIndividuals,
  NegativeDistance,
  ThetaOutOfRange,
  DomainError,
  ShapeCompositionError,
  EmptyDataset,
  NonFiniteLoss,
  KTooLarge,
  DegenerateEncoding,
  UntrainedModel,
  ZeroVector,
  EmptyTestSet,
  AllTrialsFailed,
  InvalidSpec,
  FormatError,
  ChecksumMismatch,
  IndexOutOfRange,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (and tests) can branch on the category without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace eegfmri
