// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/error.hpp"

namespace eegfmri {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NumericOverflow: return "NumericOverflow";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::WindowTooLong: return "WindowTooLong";
    case ErrorKind::AlreadyScaled: return "AlreadyScaled";
    case ErrorKind::InvalidFactor: return "InvalidFactor";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::ShiftNotMultiple: return "ShiftNotMultiple";
    case ErrorKind::RecordingTooShort: return "RecordingTooShort";
    case ErrorKind::NoNegativesPossible: return "NoNegativesPossible";
    case ErrorKind::NotEnoughIndividuals: return "NotEnoughIndividuals";
    case ErrorKind::NegativeDistance: return "NegativeDistance";
    case ErrorKind::ThetaOutOfRange: return "ThetaOutOfRange";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::ShapeCompositionError: return "ShapeCompositionError";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::DegenerateEncoding: return "DegenerateEncoding";
    case ErrorKind::UntrainedModel: return "UntrainedModel";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::AllTrialsFailed: return "AllTrialsFailed";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace eegfmri
