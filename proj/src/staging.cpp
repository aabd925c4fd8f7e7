#include "sleeptk/staging.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "sleeptk/dsp.hpp"
#include "sleeptk/error.hpp"
#include "text_util.hpp"

namespace sleeptk::staging {

namespace {

constexpr StageVector kUniform = {0.2, 0.2, 0.2, 0.2, 0.2};

constexpr std::array<double, 6> kBandEdgesHz = {0.5, 4.0, 8.0, 12.0, 16.0, 30.0};

// Template relative band powers (delta, theta, alpha, sigma, beta) per
// stage. Scores are negative squared distances between log band powers and
// log templates, so the backend is a nearest-centroid classifier with a
// softmax on top; the log keeps the small sigma and beta fractions from
// being swamped by delta.
constexpr std::array<std::array<double, 5>, kNumStages> kTemplates = {{
    {0.05, 0.08, 0.45, 0.11, 0.31},  // Wake
    {0.16, 0.64, 0.15, 0.03, 0.03},  // N1
    {0.54, 0.28, 0.08, 0.07, 0.03},  // N2
    {0.76, 0.20, 0.03, 0.01, 0.01},  // N3
    {0.16, 0.42, 0.09, 0.05, 0.28},  // REM
}};
constexpr double kLogFloor = 1e-6;
constexpr double kSoftmaxGain = 1.0;

StageVector softmax(const std::array<double, kNumStages>& scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  StageVector p{};
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumStages; ++k) {
    p[k] = std::exp(scores[k] - top);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

class BaselineBackend final : public ClassifierBackend {
 public:
  std::string name() const override { return "baseline"; }
  bool context_free() const override { return true; }

  std::vector<StageVector> predict(const StagingWindow& window) const override {
    const std::size_t spe = window.samples_per_epoch();
    std::vector<StageVector> out(window.n_epochs, kUniform);
    for (std::size_t e = 0; e < window.n_epochs; ++e) {
      std::array<double, 5> mean{};
      std::size_t used = 0;
      for (const auto& ch : window.channels) {
        const auto epoch = ch.subspan(e * spe, spe);
        const auto rel = relative_band_powers(epoch, window.fs_hz);
        double total = 0.0;
        for (double v : rel) total += v;
        if (total == 0.0) continue;
        for (std::size_t k = 0; k < 5; ++k) mean[k] += rel[k];
        ++used;
      }
      if (used == 0) continue;
      for (auto& v : mean) v /= static_cast<double>(used);
      std::array<double, kNumStages> scores{};
      for (std::size_t s = 0; s < kNumStages; ++s) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
          const double d = std::log(std::max(mean[k], kLogFloor)) - std::log(kTemplates[s][k]);
          d2 += d * d;
        }
        scores[s] = -kSoftmaxGain * d2;
      }
      out[e] = softmax(scores);
    }
    return out;
  }
};

class PrecomputedBackend final : public ClassifierBackend {
 public:
  explicit PrecomputedBackend(std::vector<StageVector> rows) : rows_(std::move(rows)) {}

  std::string name() const override { return "precomputed"; }
  bool context_free() const override { return true; }

  void prepare(std::size_t n_epochs) const override {
    if (rows_.size() != n_epochs) {
      throw Error(ErrorKind::LengthMismatch, "probability file has " + std::to_string(rows_.size()) +
                                                 " rows for " + std::to_string(n_epochs) + " epochs");
    }
  }

  std::vector<StageVector> predict(const StagingWindow& window) const override {
    std::vector<StageVector> out(window.n_epochs, kUniform);
    for (std::size_t i = 0; i < window.n_epochs; ++i) {
      const long e = window.first_epoch + static_cast<long>(i);
      if (e >= 0 && static_cast<std::size_t>(e) < rows_.size()) out[i] = rows_[static_cast<std::size_t>(e)];
    }
    return out;
  }

 private:
  std::vector<StageVector> rows_;
};

StageVector validated_row(StageVector row, std::size_t line_no) {
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::NonProbabilityRow, "row " + std::to_string(line_no) + ": negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 0.1 + 1e-9) {
    throw Error(ErrorKind::NonProbabilityRow,
                "row " + std::to_string(line_no) + ": sums to " + format_double(sum));
  }
  for (auto& v : row) v /= sum;
  return row;
}

}  // namespace

SignalRecord preprocess_for_staging(const SignalRecord& rec, const StagingParams& params) {
  SignalRecord out;
  out.start_time = rec.start_time;
  for (const auto& ch : rec.channels) {
    const auto spec = params.band_high_hz < 0.5 * ch.fs
                          ? dsp::design_bandpass(params.filter_order, params.band_low_hz, params.band_high_hz, ch.fs)
                          : dsp::design_highpass(params.filter_order, params.band_low_hz, ch.fs);
    const auto filtered = dsp::apply_filter(spec, ch.samples);
    const auto resampled = dsp::resample(filtered, ch.fs, params.target_fs_hz);
    auto normalized = dsp::robust_normalize(resampled);
    dsp::clip_in_place(normalized, dsp::ClipBounds(-params.clip_limit, params.clip_limit));
    out.channels.push_back({ch.label, std::move(normalized), params.target_fs_hz});
  }
  out.validate_and_update();
  return out;
}

std::size_t epoch_count(const SignalRecord& rec) {
  if (rec.duration_s <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(rec.duration_s / Hypnogram::kEpochLenS + 1e-9));
}

std::size_t StagingWindow::samples_per_epoch() const {
  return static_cast<std::size_t>(std::llround(fs_hz * Hypnogram::kEpochLenS));
}

std::array<double, 5> relative_band_powers(std::span<const double> epoch, double fs_hz) {
  std::array<double, 5> bands{};
  if (epoch.empty()) return bands;
  const std::size_t n = epoch.size();
  const std::size_t nfft = dsp::next_pow2(n);
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    buf[i] = epoch[i] * w;
  }
  dsp::fft(buf);
  double total = 0.0;
  for (std::size_t k = 1; k <= nfft / 2; ++k) {
    const double f = static_cast<double>(k) * fs_hz / static_cast<double>(nfft);
    if (f < kBandEdgesHz.front() || f > kBandEdgesHz.back()) continue;
    const double p = std::norm(buf[k]);
    std::size_t band = 0;
    while (band + 1 < 5 && f >= kBandEdgesHz[band + 1]) ++band;
    bands[band] += p;
    total += p;
  }
  if (total > 0.0) {
    for (auto& b : bands) b /= total;
  }
  return bands;
}

std::unique_ptr<ClassifierBackend> baseline_bandpower_backend() { return std::make_unique<BaselineBackend>(); }

std::unique_ptr<ClassifierBackend> precomputed_backend(std::vector<StageVector> rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = validated_row(rows[i], i + 1);
  return std::make_unique<PrecomputedBackend>(std::move(rows));
}

std::unique_ptr<ClassifierBackend> precomputed_backend_from_text(const std::string& csv) {
  std::vector<StageVector> rows;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(csv)) {
    ++line_no;
    line = text::trim(line);
    if (line.empty()) continue;
    if (rows.empty() && text::to_lower(line).starts_with("wake")) continue;
    const auto fields = text::split(line, ',');
    if (fields.size() != kNumStages) {
      throw Error(ErrorKind::UnparsableRow, "line " + std::to_string(line_no) + ": expected 5 fields");
    }
    StageVector row{};
    for (std::size_t k = 0; k < kNumStages; ++k) {
      const auto v = text::parse_double(text::trim(fields[k]));
      if (!v) throw Error(ErrorKind::UnparsableRow, "line " + std::to_string(line_no) + ": not a number");
      row[k] = *v;
    }
    rows.push_back(validated_row(row, line_no));
  }
  return std::make_unique<PrecomputedBackend>(std::move(rows));
}

std::unique_ptr<ClassifierBackend> precomputed_backend(const std::filesystem::path& csv) {
  return precomputed_backend_from_text(read_file(csv));
}

StageProbabilities stage_probabilities(const SignalRecord& preprocessed, const ClassifierBackend& backend,
                                       const StagingParams& params) {
  const std::size_t n = epoch_count(preprocessed);
  if (n == 0) throw Error(ErrorKind::NoEpochs, "record is shorter than one 30 s epoch");
  if (params.window_epochs == 0) throw Error(ErrorKind::InvalidArgument, "window length must be positive");
  backend.prepare(n);

  const double fs = preprocessed.channels.front().fs;
  const auto spe = static_cast<std::size_t>(std::llround(fs * Hypnogram::kEpochLenS));
  const std::size_t buffered = n + 2 * params.buffer_epochs;
  std::vector<std::vector<double>> padded;
  for (const auto& ch : preprocessed.channels) {
    if (ch.fs != fs) throw Error(ErrorKind::InvalidArgument, "preprocessed channels must share one rate");
    std::vector<double> x(buffered * spe, 0.0);
    const std::size_t take = std::min(ch.samples.size(), n * spe);
    std::copy_n(ch.samples.begin(), take, x.begin() + static_cast<std::ptrdiff_t>(params.buffer_epochs * spe));
    padded.push_back(std::move(x));
  }

  std::vector<StageVector> log_sum(n, StageVector{});
  std::vector<std::size_t> hits(n, 0);
  const std::size_t w_len = params.window_epochs;
  const std::size_t n_windows = buffered >= w_len ? buffered - w_len + 1 : 0;

  if (backend.context_free() && n_windows > 0) {
    StagingWindow whole;
    whole.first_epoch = 0;
    whole.n_epochs = n;
    whole.fs_hz = fs;
    for (const auto& x : padded) whole.channels.emplace_back(x.data() + params.buffer_epochs * spe, n * spe);
    const auto pred = backend.predict(whole);
    if (pred.size() != n) throw Error(ErrorKind::LengthMismatch, "backend returned a wrong-length window");
    StageProbabilities out;
    out.probs.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      StageVector logs{};
      for (std::size_t k = 0; k < kNumStages; ++k) logs[k] = std::log(std::max(pred[e][k], params.probability_floor));
      out.probs[e] = softmax(logs);
    }
    return out;
  }

  for (std::size_t w = 0; w < n_windows; ++w) {
    StagingWindow window;
    window.first_epoch = static_cast<long>(w) - static_cast<long>(params.buffer_epochs);
    window.n_epochs = w_len;
    window.fs_hz = fs;
    for (const auto& x : padded) window.channels.emplace_back(x.data() + w * spe, w_len * spe);
    const auto pred = backend.predict(window);
    if (pred.size() != w_len) throw Error(ErrorKind::LengthMismatch, "backend returned a wrong-length window");
    for (std::size_t i = 0; i < w_len; ++i) {
      const long e = window.first_epoch + static_cast<long>(i);
      if (e < 0 || static_cast<std::size_t>(e) >= n) continue;
      for (std::size_t k = 0; k < kNumStages; ++k) {
        log_sum[static_cast<std::size_t>(e)][k] += std::log(std::max(pred[i][k], params.probability_floor));
      }
      ++hits[static_cast<std::size_t>(e)];
    }
  }

  StageProbabilities out;
  out.probs.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    if (hits[e] == 0) {
      out.probs[e] = kUniform;
      continue;
    }
    StageVector mean{};
    for (std::size_t k = 0; k < kNumStages; ++k) mean[k] = log_sum[e][k] / static_cast<double>(hits[e]);
    out.probs[e] = softmax(mean);
  }
  return out;
}

Stage argmax_stage(const StageVector& v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumStages; ++k) {
    if (v[k] > v[best]) best = k;
  }
  return kAllStages[best];
}

Hypnogram hypnogram_from_probs(const StageProbabilities& p) {
  Hypnogram h;
  h.stages.reserve(p.size());
  for (const auto& v : p.probs) h.stages.push_back(argmax_stage(v));
  return h;
}

Hypnogram stage_record(const SignalRecord& rec, const ClassifierBackend& backend, const StagingParams& params) {
  return hypnogram_from_probs(stage_probabilities(preprocess_for_staging(rec, params), backend, params));
}

std::string format_probabilities(const StageProbabilities& p) {
  std::string out = "wake,n1,n2,n3,rem\n";
  for (const auto& v : p.probs) {
    for (std::size_t k = 0; k < kNumStages; ++k) {
      out += format_double(v[k]);
      out += k + 1 < kNumStages ? ',' : '\n';
    }
  }
  return out;
}

}  // namespace sleeptk::staging
