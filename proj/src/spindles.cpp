#include "sleeptk/spindles.hpp"

#include <algorithm>
#include <cmath>

#include "sleeptk/dsp.hpp"
#include "sleeptk/error.hpp"

namespace sleeptk::spindles {

namespace {

// Comparisons against the duration and gap limits tolerate floating-point
// noise from start + duration arithmetic.
constexpr double kTimeEps = 1e-9;

std::size_t epoch_sample(std::size_t epoch, double fs) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(epoch) * Hypnogram::kEpochLenS * fs));
}

Event spanning(const Event& a, const Event& b) {
  const double start = std::min(a.start_s, b.start_s);
  const double end = std::max(a.end_s(), b.end_s());
  return {start, end - start, merge_labels(a.channels, b.channels)};
}

bool merge_pass(EventList& events, const PostprocessParams& p) {
  if (events.size() < 2) return false;
  EventList out;
  out.reserve(events.size());
  bool changed = false;
  Event cur = events.front();
  for (std::size_t i = 1; i < events.size(); ++i) {
    const Event& next = events[i];
    const bool short_one =
        cur.duration_s < p.merge_below_s - kTimeEps || next.duration_s < p.merge_below_s - kTimeEps;
    const double gap = next.start_s - cur.end_s();
    if (short_one && gap < p.merge_gap_s - kTimeEps) {
      cur = spanning(cur, next);
      changed = true;
    } else {
      out.push_back(cur);
      cur = next;
    }
  }
  out.push_back(cur);
  events = std::move(out);
  return changed;
}

class BaselineDetector final : public Detector {
 public:
  explicit BaselineDetector(const BaselineParams& p) : params_(p) {}
  std::string name() const override { return "baseline"; }
  EventList detect(const N2Block& b) const override { return detect_baseline(b, params_); }

 private:
  BaselineParams params_;
};

class UNetDetector final : public Detector {
 public:
  explicit UNetDetector(std::shared_ptr<const unet::UNetModel> m) : model_(std::move(m)) {}
  std::string name() const override { return "unet"; }
  EventList detect(const N2Block& b) const override { return detect_unet(b, *model_); }

 private:
  std::shared_ptr<const unet::UNetModel> model_;
};

}  // namespace

std::vector<N2Block> extract_n2_blocks(const SignalRecord& rec, const Hypnogram& hyp, std::string_view channel) {
  const Channel& ch = rec.channel(channel);
  const auto n_epochs = static_cast<std::size_t>(std::floor(ch.duration_s() / Hypnogram::kEpochLenS + 1e-9));
  if (hyp.size() != n_epochs) {
    throw Error(ErrorKind::LengthMismatch, "hypnogram has " + std::to_string(hyp.size()) + " epochs, channel " +
                                               std::string(channel) + " has " + std::to_string(n_epochs));
  }
  std::vector<N2Block> blocks;
  for (std::size_t e = 0; e < hyp.size();) {
    if (hyp.stages[e] != Stage::N2) {
      ++e;
      continue;
    }
    std::size_t end = e;
    while (end < hyp.size() && hyp.stages[end] == Stage::N2) ++end;
    const std::size_t s0 = epoch_sample(e, ch.fs);
    const std::size_t s1 = std::min(epoch_sample(end, ch.fs), ch.samples.size());
    N2Block b;
    b.channel = ch.label;
    b.fs = ch.fs;
    b.record_offset_s = static_cast<double>(e) * Hypnogram::kEpochLenS;
    b.samples.assign(ch.samples.begin() + static_cast<std::ptrdiff_t>(s0),
                     ch.samples.begin() + static_cast<std::ptrdiff_t>(s1));
    blocks.push_back(std::move(b));
    e = end;
  }
  return blocks;
}

N2Block preprocess_block(const N2Block& b, const BlockPreprocessParams& params) {
  auto x = dsp::apply_filter(dsp::design_highpass(params.filter_order, params.highpass_hz, b.fs), b.samples);
  if (params.lowpass_hz < 0.5 * b.fs) {
    x = dsp::apply_filter(dsp::design_lowpass(params.filter_order, params.lowpass_hz, b.fs), x);
  }
  x = dsp::resample(x, b.fs, params.target_fs_hz);
  x = dsp::robust_normalize(x);
  dsp::clip_in_place(x, dsp::ClipBounds(-params.clip_limit, params.clip_limit));
  return {b.channel, std::move(x), params.target_fs_hz, b.record_offset_s};
}

EventList detect_baseline(const N2Block& b, const BaselineParams& params) {
  if (b.duration_s() < 1.0) {
    throw Error(ErrorKind::BlockTooShort, "block of " + format_double(b.duration_s()) + " s is shorter than 1 s");
  }
  const auto sigma = dsp::apply_filter(
      dsp::design_bandpass(params.filter_order, params.band_low_hz, params.band_high_hz, b.fs), b.samples);
  const std::size_t n = sigma.size();

  // Centered moving RMS from a prefix sum of squares.
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params.rms_window_s * b.fs)));
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sigma[i] * sigma[i];
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= w / 2 ? i - w / 2 : 0;
    const std::size_t hi = std::min(n, lo + w);
    env[i] = std::sqrt(std::max(0.0, prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo));
  }
  const double threshold = dsp::quantile(env, params.percentile / 100.0);
  const auto min_len = static_cast<std::size_t>(std::llround(params.min_duration_s * b.fs));

  EventList out;
  for (std::size_t i = 0; i < n;) {
    if (!(env[i] > threshold)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && env[j] > threshold) ++j;
    if (j - i >= min_len) {
      out.push_back({b.record_offset_s + static_cast<double>(i) / b.fs, static_cast<double>(j - i) / b.fs,
                     {b.channel}});
    }
    i = j;
  }
  return out;
}

EventList detect_unet(const N2Block& b, const unet::UNetModel& model) {
  auto events = unet::masks_to_events(unet::forward(model, b.samples), b.fs);
  for (auto& e : events) {
    e.start_s += b.record_offset_s;
    e.channels = {b.channel};
  }
  return events;
}

std::unique_ptr<Detector> baseline_detector(const BaselineParams& params) {
  return std::make_unique<BaselineDetector>(params);
}

std::unique_ptr<Detector> unet_detector(std::shared_ptr<const unet::UNetModel> model) {
  if (!model) throw Error(ErrorKind::InvalidArgument, "unet detector needs a model");
  return std::make_unique<UNetDetector>(std::move(model));
}

EventList postprocess_events(const EventList& events, const PostprocessParams& params) {
  EventList merged = events;
  sort_events(merged);
  while (merge_pass(merged, params)) {
  }
  EventList out;
  for (const auto& e : merged) {
    if (e.duration_s < params.min_duration_s - kTimeEps) continue;
    if (e.duration_s > params.max_duration_s + kTimeEps) continue;
    out.push_back(e);
  }
  return out;
}

EventList union_channels(std::span<const EventList> per_channel) {
  EventList all;
  for (const auto& list : per_channel) all.insert(all.end(), list.begin(), list.end());
  std::stable_sort(all.begin(), all.end(), [](const Event& a, const Event& b) {
    return a.start_s < b.start_s || (a.start_s == b.start_s && a.end_s() < b.end_s());
  });
  EventList out;
  for (const auto& e : all) {
    if (!out.empty() && e.start_s < out.back().end_s()) {
      out.back() = spanning(out.back(), e);
    } else {
      out.push_back(e);
    }
  }
  return out;
}

ChannelDetection detect_channel(const SignalRecord& rec, const Hypnogram& hyp, std::string_view channel,
                                const Detector& detector, const DetectionParams& params) {
  ChannelDetection out;
  out.channel = std::string(channel);
  for (const auto& block : extract_n2_blocks(rec, hyp, channel)) {
    const auto found = detector.detect(preprocess_block(block, params.preprocess));
    // Postprocess per block: merging never crosses a non-N2 interruption.
    const auto kept = postprocess_events(found, params.postprocess);
    out.raw.insert(out.raw.end(), found.begin(), found.end());
    out.postprocessed.insert(out.postprocessed.end(), kept.begin(), kept.end());
  }
  return out;
}

RecordDetection detect_record(const SignalRecord& rec, const Hypnogram& hyp, std::span<const std::string> channels,
                              const Detector& detector, const DetectionParams& params) {
  RecordDetection out;
  std::vector<EventList> lists;
  for (const auto& ch : channels) {
    out.channels.push_back(detect_channel(rec, hyp, ch, detector, params));
    lists.push_back(out.channels.back().postprocessed);
  }
  out.events = union_channels(lists);
  return out;
}

}  // namespace sleeptk::spindles
