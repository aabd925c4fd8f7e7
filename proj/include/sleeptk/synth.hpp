#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sleeptk/record_io.hpp"

namespace sleeptk::synth {

// SplitMix64: a counter-based generator whose output depends only on the
// seed and the number of draws, identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  // Independent stream derived from (seed, stream id).
  SplitMix64(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next();
  double uniform();  // [0, 1) with 53 random bits
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();   // Box-Muller
  double exponential(double rate);

 private:
  std::uint64_t state_;
  bool have_spare_{false};
  double spare_{0.0};
};

struct Range {
  double lo{0.0};
  double hi{0.0};
};

using TransitionMatrix = std::array<std::array<double, kNumStages>, kNumStages>;
// Relative band-noise gains (delta, theta, alpha, sigma, beta) per stage.
using BandGains = std::array<std::array<double, 5>, kNumStages>;

TransitionMatrix default_transitions();
BandGains default_band_gains();

struct SynthSpec {
  std::uint64_t seed{1};
  double duration_h{1.0};
  double fs_hz{256.0};
  std::vector<std::string> channels{"C3-A2", "C4-A1", "F3-A2", "F4-A1"};
  TransitionMatrix transitions{default_transitions()};
  Stage initial_stage{Stage::Wake};
  double spindle_rate_per_min{8.0};
  Range spindle_duration_s{0.5, 1.5};
  Range spindle_frequency_hz{11.0, 15.0};
  Range spindle_amplitude_uv{5.0, 25.0};
  double min_gap_s{1.0};
  double edge_margin_s{1.0};  // spindles keep this distance from N2 run edges
  double background_uv{3.0};  // RMS of the 1/f component and unit of the band gains
  BandGains band_gains{default_band_gains()};
  double snr_scale{1.0};  // multiplies every spindle amplitude

  // Throws InvalidTransitionMatrix, InvalidSpec.
  void validate() const;
  std::size_t n_epochs() const;
};

// Markov chain over stages, one entry per 30 s epoch.
Hypnogram gen_hypnogram(const SynthSpec& spec);

struct SynthRecord {
  SignalRecord record;
  EventList ground_truth;  // each event lists every channel
  std::vector<double> frequencies_hz;  // planted frequency per ground-truth event
};

// 1/f background plus crossfaded stage-dependent band noise per channel,
// and Hann-windowed sinusoidal bursts placed only inside N2 runs. Each
// burst's window is twice the event duration, centred on the event, so the
// ground-truth interval is the half-maximum width and the amplitude is the
// window peak. Windows stay inside the N2 run minus edge_margin_s.
SynthRecord gen_record(const SynthSpec& spec, const Hypnogram& hyp);

// JSON spec with every field optional. Throws InvalidSpec.
SynthSpec parse_spec(std::string_view json_text);
SynthSpec read_spec(const std::filesystem::path& path);
std::string format_spec(const SynthSpec& spec);

// Writes record.edf, hypnogram.txt, events.csv and spec.json into dir.
void write_synth(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace sleeptk::synth
