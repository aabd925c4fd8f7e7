#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sleeptk {

// Every failure the toolkit reports carries one of these kinds. The CLI turns
// the kind into the "error" field of its JSON error object, so names are part
// of the external surface.
enum class ErrorKind {
  // record_io
  FileNotFound,
  MalformedHeader,
  InconsistentRecord,
  UnsupportedEncoding,
  UnknownStageToken,
  EmptyHypnogram,
  NegativeDuration,
  UnparsableRow,
  // dsp
  CutoffOutOfRange,
  InvalidOrder,
  EmptyInput,
  IrrationalRatio,
  DegenerateSignal,
  InvalidBounds,
  // staging
  NoEpochs,
  LengthMismatch,
  NonProbabilityRow,
  // unet
  ShapeMismatch,
  UnknownActivation,
  TruncatedTensorData,
  InputTooShort,
  // spindles
  ChannelNotFound,
  BlockTooShort,
  // metrics
  NoRecordings,
  InsufficientRaters,
  EmptyScores,
  // characteristics
  NoN2Sleep,
  TooFewCrossings,
  EmptySegment,
  CohortTooSmall,
  // stats
  SampleTooSmall,
  EmptySample,
  // synth
  InvalidTransitionMatrix,
  InvalidSpec,
  // pipeline / config
  InvalidConfig,
  // generic
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sleeptk
