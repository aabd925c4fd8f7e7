#include "sleeptk/error.hpp"

namespace sleeptk {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::FileNotFound:
      return "FileNotFound";
    case ErrorKind::MalformedHeader:
      return "MalformedHeader";
    case ErrorKind::InconsistentRecord:
      return "InconsistentRecord";
    case ErrorKind::UnsupportedEncoding:
      return "UnsupportedEncoding";
    case ErrorKind::UnknownStageToken:
      return "UnknownStageToken";
    case ErrorKind::EmptyHypnogram:
      return "EmptyHypnogram";
    case ErrorKind::NegativeDuration:
      return "NegativeDuration";
    case ErrorKind::UnparsableRow:
      return "UnparsableRow";
    case ErrorKind::CutoffOutOfRange:
      return "CutoffOutOfRange";
    case ErrorKind::InvalidOrder:
      return "InvalidOrder";
    case ErrorKind::EmptyInput:
      return "EmptyInput";
    case ErrorKind::IrrationalRatio:
      return "IrrationalRatio";
    case ErrorKind::DegenerateSignal:
      return "DegenerateSignal";
    case ErrorKind::InvalidBounds:
      return "InvalidBounds";
    case ErrorKind::NoEpochs:
      return "NoEpochs";
    case ErrorKind::LengthMismatch:
      return "LengthMismatch";
    case ErrorKind::NonProbabilityRow:
      return "NonProbabilityRow";
    case ErrorKind::ShapeMismatch:
      return "ShapeMismatch";
    case ErrorKind::UnknownActivation:
      return "UnknownActivation";
    case ErrorKind::TruncatedTensorData:
      return "TruncatedTensorData";
    case ErrorKind::InputTooShort:
      return "InputTooShort";
    case ErrorKind::ChannelNotFound:
      return "ChannelNotFound";
    case ErrorKind::BlockTooShort:
      return "BlockTooShort";
    case ErrorKind::NoRecordings:
      return "NoRecordings";
    case ErrorKind::InsufficientRaters:
      return "InsufficientRaters";
    case ErrorKind::EmptyScores:
      return "EmptyScores";
    case ErrorKind::NoN2Sleep:
      return "NoN2Sleep";
    case ErrorKind::TooFewCrossings:
      return "TooFewCrossings";
    case ErrorKind::EmptySegment:
      return "EmptySegment";
    case ErrorKind::CohortTooSmall:
      return "CohortTooSmall";
    case ErrorKind::SampleTooSmall:
      return "SampleTooSmall";
    case ErrorKind::EmptySample:
      return "EmptySample";
    case ErrorKind::InvalidTransitionMatrix:
      return "InvalidTransitionMatrix";
    case ErrorKind::InvalidSpec:
      return "InvalidSpec";
    case ErrorKind::InvalidConfig:
      return "InvalidConfig";
    case ErrorKind::InvalidArgument:
      return "InvalidArgument";
    case ErrorKind::IoError:
      return "IoError";
  }
  return "Unknown";
}

}  // namespace sleeptk
