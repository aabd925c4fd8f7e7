#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sleeptk/record_io.hpp"
#include "sleeptk/unet_infer.hpp"

namespace sleeptk::spindles {

// A maximal run of consecutive N2 epochs on one channel.
struct N2Block {
  std::string channel;
  std::vector<double> samples;
  double fs{0.0};
  double record_offset_s{0.0};  // multiple of 30 s

  double duration_s() const { return fs > 0.0 ? samples.size() / fs : 0.0; }
};

// Blocks are disjoint, ordered and cover exactly the N2 epochs. The
// hypnogram must have one entry per full epoch of the channel.
// Throws ChannelNotFound, LengthMismatch.
std::vector<N2Block> extract_n2_blocks(const SignalRecord& rec, const Hypnogram& hyp,
                                       std::string_view channel);

struct BlockPreprocessParams {
  double highpass_hz{0.3};
  double lowpass_hz{30.0};
  int filter_order{20};
  double target_fs_hz{100.0};
  double clip_limit{20.0};
};

// 20th-order Butterworth highpass at 0.3 Hz, then 20th-order lowpass at
// 30 Hz (skipped when 30 Hz is not below the block's Nyquist), resampling to
// 100 Hz, robust normalization and clipping. Throws DegenerateSignal.
N2Block preprocess_block(const N2Block& b, const BlockPreprocessParams& params = {});

struct BaselineParams {
  double band_low_hz{11.0};
  double band_high_hz{16.0};
  int filter_order{4};
  double rms_window_s{0.3};
  double percentile{85.0};
  double min_duration_s{0.3};
};

// Sliding-window RMS of the sigma-band signal, thresholded at a percentile
// of its own distribution; runs above threshold lasting at least
// min_duration_s become events. Events are on the recording timeline and
// labelled with the block's channel. Throws BlockTooShort (< 1 s).
EventList detect_baseline(const N2Block& b, const BaselineParams& params = {});

// forward + masks_to_events, shifted onto the recording timeline.
EventList detect_unet(const N2Block& b, const unet::UNetModel& model);

// Runs on preprocessed blocks. Implementations must be thread-safe.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;
  virtual EventList detect(const N2Block& preprocessed) const = 0;
};

std::unique_ptr<Detector> baseline_detector(const BaselineParams& params = {});
std::unique_ptr<Detector> unet_detector(std::shared_ptr<const unet::UNetModel> model);

struct PostprocessParams {
  double merge_below_s{0.3};
  double merge_gap_s{0.1};
  double min_duration_s{0.3};
  double max_duration_s{2.5};
};

// Merge adjacent events when at least one is shorter than merge_below_s and
// the gap is below merge_gap_s (the merged event spans first start to last
// end), repeated to a fixpoint; then drop events shorter than
// min_duration_s or longer than max_duration_s. Idempotent.
EventList postprocess_events(const EventList& events, const PostprocessParams& params = {});

// Overlapping events from different lists merge into their union interval
// with the union of channel labels; output sorted by start, non-overlapping.
EventList union_channels(std::span<const EventList> per_channel);

struct DetectionParams {
  BlockPreprocessParams preprocess;
  PostprocessParams postprocess;
};

struct ChannelDetection {
  std::string channel;
  EventList raw;            // detector output before postprocessing
  EventList postprocessed;
};

// extract -> preprocess -> detect -> postprocess for one channel. Blocks are
// processed independently, so no event spans a non-N2 epoch.
ChannelDetection detect_channel(const SignalRecord& rec, const Hypnogram& hyp, std::string_view channel,
                                const Detector& detector, const DetectionParams& params = {});

struct RecordDetection {
  std::vector<ChannelDetection> channels;
  EventList events;  // union across channels
};

RecordDetection detect_record(const SignalRecord& rec, const Hypnogram& hyp,
                              std::span<const std::string> channels, const Detector& detector,
                              const DetectionParams& params = {});

}  // namespace sleeptk::spindles
