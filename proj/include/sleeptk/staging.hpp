#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sleeptk/record_io.hpp"

namespace sleeptk::staging {

using StageVector = std::array<double, kNumStages>;  // Wake, N1, N2, N3, REM

struct StageProbabilities {
  std::vector<StageVector> probs;
  std::size_t size() const { return probs.size(); }
};

struct StagingParams {
  double band_low_hz{0.3};
  double band_high_hz{30.0};
  int filter_order{4};
  double target_fs_hz{60.0};
  double clip_limit{20.0};
  std::size_t window_epochs{21};
  std::size_t buffer_epochs{20};
  double probability_floor{1e-12};
};

// 0.3-30 Hz Butterworth bandpass (highpass only when 30 Hz is at or above
// the channel's Nyquist), resample to 60 Hz, robust normalization and
// clipping. Throws DegenerateSignal.
SignalRecord preprocess_for_staging(const SignalRecord& rec, const StagingParams& params = {});

// floor(duration / 30 s).
std::size_t epoch_count(const SignalRecord& rec);

// A run of consecutive epochs handed to a backend. Channel spans cover
// n_epochs * samples_per_epoch samples of the preprocessed, buffered signal;
// first_epoch indexes real epochs and is negative while the window overlaps
// the leading buffer.
struct StagingWindow {
  std::vector<std::span<const double>> channels;
  long first_epoch{0};
  std::size_t n_epochs{0};
  double fs_hz{0.0};

  std::size_t samples_per_epoch() const;
};

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual std::string name() const = 0;
  // Called once per recording before any window; may reject the recording.
  virtual void prepare(std::size_t n_epochs) const { (void)n_epochs; }
  // One 5-vector per window epoch. Must be deterministic and thread-safe.
  virtual std::vector<StageVector> predict(const StagingWindow& window) const = 0;
  // True when each epoch's prediction ignores the rest of the window. The
  // window average then reduces to one prediction per epoch, which
  // stage_probabilities computes directly.
  virtual bool context_free() const { return false; }
};

// Relative band powers (delta, theta, alpha, sigma, beta) averaged over
// channels, mapped through a softmax over fixed linear scores.
std::unique_ptr<ClassifierBackend> baseline_bandpower_backend();

// Replays per-epoch vectors from CSV (header wake,n1,n2,n3,rem). Rows whose
// sum is within 10% of 1 are renormalized; others, or negative entries,
// raise NonProbabilityRow. prepare() raises LengthMismatch when the row count
// differs from the epoch count.
std::unique_ptr<ClassifierBackend> precomputed_backend(const std::filesystem::path& csv);
std::unique_ptr<ClassifierBackend> precomputed_backend_from_text(const std::string& csv);
std::unique_ptr<ClassifierBackend> precomputed_backend(std::vector<StageVector> rows);

// Relative band powers of one epoch (fractions of 0.5-30 Hz power) for the
// baseline backend; exposed for tests.
std::array<double, 5> relative_band_powers(std::span<const double> epoch, double fs_hz);

// Sliding window of `window_epochs` epochs with step 1 over the preprocessed
// record padded with `buffer_epochs` zero epochs on each side; per-epoch
// output is the renormalized element-wise geometric mean of every window
// prediction for that epoch. Throws NoEpochs.
StageProbabilities stage_probabilities(const SignalRecord& preprocessed, const ClassifierBackend& backend,
                                       const StagingParams& params = {});

// Argmax per epoch; ties resolve to the earliest stage in Wake, N1, N2, N3, REM.
Hypnogram hypnogram_from_probs(const StageProbabilities& p);
Stage argmax_stage(const StageVector& v);

// preprocess_for_staging + stage_probabilities + hypnogram_from_probs.
Hypnogram stage_record(const SignalRecord& rec, const ClassifierBackend& backend,
                       const StagingParams& params = {});

std::string format_probabilities(const StageProbabilities& p);

}  // namespace sleeptk::staging
