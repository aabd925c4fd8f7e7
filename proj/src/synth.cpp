#include "sleeptk/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sleeptk/dsp.hpp"
#include "sleeptk/error.hpp"

namespace sleeptk::synth {

namespace {

using json = nlohmann::json;

constexpr std::array<std::array<double, 2>, 5> kBandsHz = {{{0.5, 4.0}, {4.0, 8.0}, {8.0, 12.0}, {12.0, 16.0}, {16.0, 30.0}}};
constexpr double kCrossfadeS = 1.0;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream ids for the independent random sequences of a record.
enum StreamId : std::uint64_t { kHypnogram = 1, kSpindles = 2, kChannelBase = 1000 };

std::vector<double> white(SplitMix64& rng, std::size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

void scale_to_rms(std::vector<double>& x, double target) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  const double rms = std::sqrt(acc / static_cast<double>(std::max<std::size_t>(1, x.size())));
  if (rms == 0.0) return;
  for (auto& v : x) v *= target / rms;
}

// Paul Kellet's pink-noise filter: -10 dB/decade over about three decades.
std::vector<double> pink(SplitMix64& rng, std::size_t n) {
  std::vector<double> x(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (auto& v : x) {
    const double w = rng.normal();
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
  }
  return x;
}

// Per-sample gain following per-epoch targets with linear crossfades
// centred on epoch boundaries.
double crossfaded(const std::vector<double>& per_epoch, std::size_t i, double fs) {
  const double t = static_cast<double>(i) / fs;
  const double epoch_len = Hypnogram::kEpochLenS;
  const auto e = std::min(per_epoch.size() - 1, static_cast<std::size_t>(t / epoch_len));
  const double into = t - static_cast<double>(e) * epoch_len;
  const double half = 0.5 * kCrossfadeS;
  if (into < half && e > 0) {
    const double a = 0.5 + into / kCrossfadeS;
    return a * per_epoch[e] + (1.0 - a) * per_epoch[e - 1];
  }
  if (epoch_len - into < half && e + 1 < per_epoch.size()) {
    const double a = 0.5 + (epoch_len - into) / kCrossfadeS;
    return a * per_epoch[e] + (1.0 - a) * per_epoch[e + 1];
  }
  return per_epoch[e];
}

Range range_from(const json& j, const char* key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2) throw Error(ErrorKind::InvalidSpec, std::string(key) + " must be [lo, hi]");
  return {r[0].get<double>(), r[1].get<double>()};
}

void check_range(Range r, const char* name, double min_lo) {
  if (!(r.lo >= min_lo) || !(r.hi >= r.lo) || !std::isfinite(r.hi)) {
    throw Error(ErrorKind::InvalidSpec, std::string(name) + " range is invalid");
  }
}

}  // namespace

SplitMix64::SplitMix64(std::uint64_t seed, std::uint64_t stream)
    : state_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ULL))) {}

std::uint64_t SplitMix64::next() {
  state_ += 0x9E3779B97F4A7C15ULL;
  return mix(state_);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double SplitMix64::exponential(double rate) {
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return -std::log(u) / rate;
}

TransitionMatrix default_transitions() {
  return {{
      {0.90, 0.06, 0.03, 0.00, 0.01},  // Wake
      {0.05, 0.70, 0.22, 0.00, 0.03},  // N1
      {0.01, 0.02, 0.93, 0.03, 0.01},  // N2
      {0.01, 0.00, 0.07, 0.92, 0.00},  // N3
      {0.02, 0.03, 0.02, 0.00, 0.93},  // REM
  }};
}

BandGains default_band_gains() {
  return {{
      {0.0, 0.3, 1.5, 0.0, 1.5},  // Wake
      {0.3, 1.5, 0.3, 0.0, 0.2},  // N1
      {1.0, 0.6, 0.0, 0.0, 0.0},  // N2
      {3.0, 0.3, 0.0, 0.0, 0.0},  // N3
      {0.3, 1.0, 0.0, 0.0, 1.0},  // REM
  }};
}

void SynthSpec::validate() const {
  for (std::size_t r = 0; r < kNumStages; ++r) {
    double sum = 0.0;
    for (double p : transitions[r]) {
      if (!(p >= 0.0)) throw Error(ErrorKind::InvalidTransitionMatrix, "negative transition probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorKind::InvalidTransitionMatrix,
                  "transition row " + std::string(stage_token(kAllStages[r])) + " sums to " + format_double(sum));
    }
  }
  if (!(duration_h > 0.0) || !(fs_hz > 0.0)) throw Error(ErrorKind::InvalidSpec, "duration and fs must be positive");
  if (channels.empty()) throw Error(ErrorKind::InvalidSpec, "at least one channel is required");
  if (!(spindle_rate_per_min >= 0.0)) throw Error(ErrorKind::InvalidSpec, "spindle rate must be non-negative");
  check_range(spindle_duration_s, "spindle_duration_s", 0.3);
  if (spindle_duration_s.hi > 2.5) throw Error(ErrorKind::InvalidSpec, "spindle durations must lie in [0.3, 2.5] s");
  check_range(spindle_frequency_hz, "spindle_frequency_hz", 0.0);
  if (!(spindle_frequency_hz.hi < 0.5 * fs_hz)) throw Error(ErrorKind::InvalidSpec, "spindle frequency above Nyquist");
  check_range(spindle_amplitude_uv, "spindle_amplitude_uv", 0.0);
  if (!(min_gap_s >= 0.0) || !(edge_margin_s >= 0.0) || !(background_uv >= 0.0) || !(snr_scale >= 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "gap, margin, background and snr_scale must be non-negative");
  }
  for (const auto& row : band_gains) {
    for (double g : row) {
      if (!(g >= 0.0)) throw Error(ErrorKind::InvalidSpec, "band gains must be non-negative");
    }
  }
}

std::size_t SynthSpec::n_epochs() const {
  return static_cast<std::size_t>(std::llround(duration_h * 3600.0 / Hypnogram::kEpochLenS));
}

Hypnogram gen_hypnogram(const SynthSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed, kHypnogram);
  Hypnogram h;
  const std::size_t n = spec.n_epochs();
  h.stages.reserve(n);
  Stage s = spec.initial_stage;
  for (std::size_t e = 0; e < n; ++e) {
    if (e > 0) {
      const auto& row = spec.transitions[static_cast<std::size_t>(s)];
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t next = kNumStages - 1;
      for (std::size_t k = 0; k < kNumStages; ++k) {
        acc += row[k];
        if (u < acc) {
          next = k;
          break;
        }
      }
      // Guard against rounding leaving u above the final cumulative sum.
      while (row[next] == 0.0 && next > 0) --next;
      s = kAllStages[next];
    }
    h.stages.push_back(s);
  }
  return h;
}

SynthRecord gen_record(const SynthSpec& spec, const Hypnogram& hyp) {
  spec.validate();
  const double fs = spec.fs_hz;
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(hyp.size()) * Hypnogram::kEpochLenS * fs));
  SynthRecord out;

  // Ground-truth spindles: thinned Poisson arrivals inside each N2 run.
  SplitMix64 srng(spec.seed, kSpindles);
  const double rate_per_s = spec.spindle_rate_per_min / 60.0;
  struct Planted {
    double start, dur, freq, amp, phase;
  };
  std::vector<Planted> planted;
  for (std::size_t e = 0; e < hyp.size();) {
    if (hyp.stages[e] != Stage::N2) {
      ++e;
      continue;
    }
    std::size_t end = e;
    while (end < hyp.size() && hyp.stages[end] == Stage::N2) ++end;
    const double run_start = static_cast<double>(e) * Hypnogram::kEpochLenS + spec.edge_margin_s;
    const double run_end = static_cast<double>(end) * Hypnogram::kEpochLenS - spec.edge_margin_s;
    if (rate_per_s > 0.0) {
      double t = run_start;
      double prev_end = -1e300;
      while (true) {
        t += srng.exponential(rate_per_s);
        const double dur = srng.uniform(spec.spindle_duration_s.lo, spec.spindle_duration_s.hi);
        const double freq = srng.uniform(spec.spindle_frequency_hz.lo, spec.spindle_frequency_hz.hi);
        const double amp = srng.uniform(spec.spindle_amplitude_uv.lo, spec.spindle_amplitude_uv.hi);
        const double phase = srng.uniform(0.0, 2.0 * std::numbers::pi);
        // The Hann window spans twice the event, so the event is its half-maximum width.
        const double start = std::max({t, prev_end + spec.min_gap_s, run_start + 0.5 * dur});
        if (start + 1.5 * dur > run_end) break;
        planted.push_back({start, dur, freq, amp * spec.snr_scale, phase});
        prev_end = start + dur;
        t = start;
      }
    }
    e = end;
  }
  for (const auto& p : planted) {
    out.ground_truth.push_back({p.start, p.dur, spec.channels});
    out.frequencies_hz.push_back(p.freq);
  }
  sort_events(out.ground_truth);

  std::vector<std::vector<double>> band_epoch_gain(5, std::vector<double>(std::max<std::size_t>(1, hyp.size()), 0.0));
  for (std::size_t e = 0; e < hyp.size(); ++e) {
    for (std::size_t b = 0; b < 5; ++b) band_epoch_gain[b][e] = spec.band_gains[static_cast<std::size_t>(hyp.stages[e])][b];
  }

  for (std::size_t c = 0; c < spec.channels.size(); ++c) {
    SplitMix64 rng(spec.seed, kChannelBase + c);
    std::vector<double> x(n, 0.0);
    if (spec.background_uv > 0.0 && n > 0) {
      x = pink(rng, n);
      scale_to_rms(x, spec.background_uv);
      for (std::size_t b = 0; b < 5; ++b) {
        const double hi = std::min(kBandsHz[b][1], 0.45 * fs);
        if (hi <= kBandsHz[b][0]) continue;
        auto band = dsp::apply_filter(dsp::design_bandpass(2, kBandsHz[b][0], hi, fs), white(rng, n),
                                      dsp::FilterMode::Forward);
        scale_to_rms(band, spec.background_uv);
        for (std::size_t i = 0; i < n; ++i) x[i] += crossfaded(band_epoch_gain[b], i, fs) * band[i];
      }
    }
    for (const auto& p : planted) {
      const double from = p.start - 0.5 * p.dur;
      const double span = 2.0 * p.dur;
      const auto i0 = static_cast<std::size_t>(std::ceil(from * fs));
      const auto i1 = std::min(n, static_cast<std::size_t>(std::floor((from + span) * fs)));
      for (std::size_t i = i0; i < i1; ++i) {
        const double t = static_cast<double>(i) / fs - from;
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / span);
        x[i] += p.amp * w * std::sin(2.0 * std::numbers::pi * p.freq * (static_cast<double>(i) / fs - p.start) + p.phase);
      }
    }
    out.record.channels.push_back({spec.channels[c], std::move(x), fs});
  }
  out.record.start_time = "01.01.00 22.00.00";
  out.record.validate_and_update();
  return out;
}

SynthSpec parse_spec(std::string_view json_text) {
  SynthSpec s;
  try {
    const auto j = json::parse(json_text);
    if (!j.is_object()) throw Error(ErrorKind::InvalidSpec, "spec must be a JSON object");
    s.seed = j.value("seed", s.seed);
    s.duration_h = j.value("duration_h", s.duration_h);
    s.fs_hz = j.value("fs_hz", s.fs_hz);
    s.channels = j.value("channels", s.channels);
    if (j.contains("initial_stage")) s.initial_stage = parse_stage_token(j.at("initial_stage").get<std::string>());
    if (j.contains("transitions")) {
      const auto& t = j.at("transitions");
      if (!t.is_array() || t.size() != kNumStages) throw Error(ErrorKind::InvalidTransitionMatrix, "transitions must be 5x5");
      for (std::size_t r = 0; r < kNumStages; ++r) {
        if (!t[r].is_array() || t[r].size() != kNumStages) {
          throw Error(ErrorKind::InvalidTransitionMatrix, "transitions must be 5x5");
        }
        for (std::size_t k = 0; k < kNumStages; ++k) s.transitions[r][k] = t[r][k].get<double>();
      }
    }
    if (j.contains("band_gains")) {
      const auto& g = j.at("band_gains");
      if (!g.is_array() || g.size() != kNumStages) throw Error(ErrorKind::InvalidSpec, "band_gains must be 5x5");
      for (std::size_t r = 0; r < kNumStages; ++r) {
        if (!g[r].is_array() || g[r].size() != 5) throw Error(ErrorKind::InvalidSpec, "band_gains must be 5x5");
        for (std::size_t k = 0; k < 5; ++k) s.band_gains[r][k] = g[r][k].get<double>();
      }
    }
    s.spindle_rate_per_min = j.value("spindle_rate_per_min", s.spindle_rate_per_min);
    s.spindle_duration_s = range_from(j, "spindle_duration_s", s.spindle_duration_s);
    s.spindle_frequency_hz = range_from(j, "spindle_frequency_hz", s.spindle_frequency_hz);
    s.spindle_amplitude_uv = range_from(j, "spindle_amplitude_uv", s.spindle_amplitude_uv);
    s.min_gap_s = j.value("min_gap_s", s.min_gap_s);
    s.edge_margin_s = j.value("edge_margin_s", s.edge_margin_s);
    s.background_uv = j.value("background_uv", s.background_uv);
    s.snr_scale = j.value("snr_scale", s.snr_scale);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSpec read_spec(const std::filesystem::path& path) { return parse_spec(read_file(path)); }

std::string format_spec(const SynthSpec& s) {
  json j;
  j["seed"] = s.seed;
  j["duration_h"] = s.duration_h;
  j["fs_hz"] = s.fs_hz;
  j["channels"] = s.channels;
  j["initial_stage"] = stage_token(s.initial_stage);
  j["transitions"] = s.transitions;
  j["band_gains"] = s.band_gains;
  j["spindle_rate_per_min"] = s.spindle_rate_per_min;
  j["spindle_duration_s"] = {s.spindle_duration_s.lo, s.spindle_duration_s.hi};
  j["spindle_frequency_hz"] = {s.spindle_frequency_hz.lo, s.spindle_frequency_hz.hi};
  j["spindle_amplitude_uv"] = {s.spindle_amplitude_uv.lo, s.spindle_amplitude_uv.hi};
  j["min_gap_s"] = s.min_gap_s;
  j["edge_margin_s"] = s.edge_margin_s;
  j["background_uv"] = s.background_uv;
  j["snr_scale"] = s.snr_scale;
  return j.dump(2) + "\n";
}

void write_synth(const SynthSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto hyp = gen_hypnogram(spec);
  const auto rec = gen_record(spec, hyp);
  write_edf(rec.record, dir / "record.edf");
  write_hypnogram(hyp, dir / "hypnogram.txt");
  write_events(rec.ground_truth, dir / "events.csv");
  write_file_atomic(dir / "spec.json", format_spec(spec));
}

}  // namespace sleeptk::synth
