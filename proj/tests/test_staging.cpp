#include <doctest.h>

#include <cmath>
#include <random>

#include "sleeptk/dsp.hpp"
#include "sleeptk/error.hpp"
#include "sleeptk/staging.hpp"
#include "test_util.hpp"

using namespace sleeptk;
using namespace sleeptk::staging;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an sleeptk::Error");
  return ErrorKind::InvalidArgument;
}

SignalRecord record_of(std::vector<double> x, double fs, const std::string& label = "C3-A2") {
  SignalRecord r;
  r.channels.push_back({label, std::move(x), fs});
  r.validate_and_update();
  return r;
}

// Preprocessed-space record of n epochs at 60 Hz (content irrelevant).
SignalRecord epochs_at_60(std::size_t n) { return record_of(std::vector<double>(n * 1800, 0.5), 60.0); }

class ConstantBackend final : public ClassifierBackend {
 public:
  explicit ConstantBackend(StageVector v) : v_(v) {}
  std::string name() const override { return "constant"; }
  std::vector<StageVector> predict(const StagingWindow& w) const override {
    return std::vector<StageVector>(w.n_epochs, v_);
  }

 private:
  StageVector v_;
};

// Counts how often each real epoch is presented to the backend.
class CountingBackend final : public ClassifierBackend {
 public:
  explicit CountingBackend(std::size_t n) : hits(n, 0) {}
  std::string name() const override { return "counting"; }
  std::vector<StageVector> predict(const StagingWindow& w) const override {
    for (std::size_t i = 0; i < w.n_epochs; ++i) {
      const long e = w.first_epoch + static_cast<long>(i);
      if (e >= 0 && e < static_cast<long>(hits.size())) ++hits[static_cast<std::size_t>(e)];
    }
    ++windows;
    return std::vector<StageVector>(w.n_epochs, StageVector{0.2, 0.2, 0.2, 0.2, 0.2});
  }
  mutable std::vector<int> hits;
  mutable int windows{0};
};

// v2 for every epoch of the window starting at real epoch `odd_window`,
// v1 everywhere else.
class OddWindowBackend final : public ClassifierBackend {
 public:
  OddWindowBackend(StageVector v1, StageVector v2, long odd) : v1_(v1), v2_(v2), odd_(odd) {}
  std::string name() const override { return "odd"; }
  std::vector<StageVector> predict(const StagingWindow& w) const override {
    return std::vector<StageVector>(w.n_epochs, w.first_epoch == odd_ ? v2_ : v1_);
  }

 private:
  StageVector v1_, v2_;
  long odd_;
};

// Forwards to another backend but hides its context-free flag, forcing the
// full sliding-window computation.
class Windowed final : public ClassifierBackend {
 public:
  explicit Windowed(const ClassifierBackend& inner) : inner_(inner) {}
  std::string name() const override { return "windowed"; }
  void prepare(std::size_t n) const override { inner_.prepare(n); }
  std::vector<StageVector> predict(const StagingWindow& w) const override { return inner_.predict(w); }

 private:
  const ClassifierBackend& inner_;
};

std::vector<double> tone_epochs(double f, std::size_t n_epochs, double fs) {
  auto x = testutil::sine(f, fs, n_epochs * static_cast<std::size_t>(30 * fs), 30.0);
  const auto noise = testutil::white_noise(x.size(), 5, 0.5);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += noise[i];
  return x;
}

}  // namespace

TEST_SUITE("staging") {

TEST_CASE("preprocess_for_staging lengths, bounds and scale invariance") {
  const auto rec = record_of(testutil::white_noise(200 * 60, 1, 40.0), 200.0);
  const auto pre = preprocess_for_staging(rec);
  REQUIRE(pre.channels.size() == 1);
  CHECK(pre.channels[0].fs == 60.0);
  CHECK(pre.channels[0].samples.size() == 3600);
  for (double v : pre.channels[0].samples) CHECK(std::abs(v) <= 20.0);

  const auto pre5 = preprocess_for_staging(rec.scaled(5.0));
  for (std::size_t i = 0; i < 3600; ++i) {
    CHECK(pre5.channels[0].samples[i] == doctest::Approx(pre.channels[0].samples[i]).epsilon(1e-9));
  }

  // Channel below 60 Hz takes the highpass-only branch and is upsampled.
  const auto low = preprocess_for_staging(record_of(testutil::white_noise(50 * 60, 2), 50.0));
  CHECK(low.channels[0].samples.size() == 3600);

  CHECK(kind_of([] { preprocess_for_staging(record_of(std::vector<double>(6000, 3.0), 100.0)); }) ==
        ErrorKind::DegenerateSignal);
}

TEST_CASE("epoch_count") {
  CHECK(epoch_count(record_of(std::vector<double>(8 * 3600, 0.0), 1.0)) == 960);
  CHECK(epoch_count(record_of(std::vector<double>(95, 0.0), 1.0)) == 3);
  CHECK(epoch_count(record_of(std::vector<double>(29, 0.0), 1.0)) == 0);
}

TEST_CASE("every epoch is covered by exactly 21 windows") {
  for (std::size_t n = 1; n <= 50; ++n) {
    CountingBackend counter(n);
    stage_probabilities(epochs_at_60(n), counter);
    for (int h : counter.hits) CHECK(h == 21);
    CHECK(counter.windows == static_cast<int>(n + 20));
  }
}

TEST_CASE("geometric-mean aggregation") {
  const StageVector v{0.1, 0.15, 0.5, 0.2, 0.05};
  const auto p = stage_probabilities(epochs_at_60(7), ConstantBackend(v));
  REQUIRE(p.size() == 7);
  for (const auto& row : p.probs) {
    for (std::size_t k = 0; k < 5; ++k) CHECK(row[k] == doctest::Approx(v[k]).epsilon(1e-12));
  }

  // One recording epoch; the window starting at real epoch -3 differs.
  const StageVector v1{0.6, 0.1, 0.1, 0.1, 0.1}, v2{0.05, 0.05, 0.8, 0.05, 0.05};
  const auto q = stage_probabilities(epochs_at_60(1), OddWindowBackend(v1, v2, -3));
  StageVector expect{};
  double sum = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    expect[k] = std::pow(std::pow(v1[k], 20) * v2[k], 1.0 / 21.0);
    sum += expect[k];
  }
  for (std::size_t k = 0; k < 5; ++k) CHECK(q.probs[0][k] == doctest::Approx(expect[k] / sum).epsilon(1e-12));

  CHECK(kind_of([] { stage_probabilities(record_of(std::vector<double>(29 * 60, 1.0), 60.0), ConstantBackend({})); }) == ErrorKind::NoEpochs);
}

TEST_CASE("context-free shortcut equals the full window average") {
  auto x = tone_epochs(2.0, 6, 100.0);
  for (double f : {6.0, 10.0, 13.0, 25.0}) {
    const auto y = tone_epochs(f, 5, 100.0);
    x.insert(x.end(), y.begin(), y.end());
  }
  const auto pre = preprocess_for_staging(record_of(x, 100.0));
  const auto backend = baseline_bandpower_backend();
  REQUIRE(backend->context_free());
  const auto fast = stage_probabilities(pre, *backend);
  const auto slow = stage_probabilities(pre, Windowed(*backend));
  REQUIRE(fast.size() == slow.size());
  for (std::size_t e = 0; e < fast.size(); ++e) {
    for (std::size_t k = 0; k < 5; ++k) CHECK(fast.probs[e][k] == doctest::Approx(slow.probs[e][k]).epsilon(1e-12));
  }

  std::vector<StageVector> rows(26, StageVector{0.7, 0.1, 1e-15, 0.1, 0.1});
  rows[3] = {0.1, 0.2, 0.3, 0.2, 0.2};
  const auto pb = precomputed_backend(rows);
  const auto a = stage_probabilities(epochs_at_60(26), *pb);
  const auto b = stage_probabilities(epochs_at_60(26), Windowed(*pb));
  for (std::size_t e = 0; e < 26; ++e) {
    for (std::size_t k = 0; k < 5; ++k) CHECK(a.probs[e][k] == doctest::Approx(b.probs[e][k]).epsilon(1e-12));
  }
}

TEST_CASE("argmax decode") {
  StageProbabilities p;
  p.probs = {{0.1, 0.1, 0.6, 0.1, 0.1}, {0.2, 0.2, 0.2, 0.2, 0.2}, {0, 0, 0, 0.4, 0.6}};
  const auto h = hypnogram_from_probs(p);
  CHECK(h.stages == std::vector<Stage>{Stage::N2, Stage::Wake, Stage::REM});
  // Invariant under positive rescaling.
  for (auto& row : p.probs) {
    for (auto& v : row) v *= 7.5;
  }
  CHECK(hypnogram_from_probs(p) == h);
}

TEST_CASE("baseline backend on tones and noise") {
  const auto backend = baseline_bandpower_backend();
  for (double fs : {100.0, 256.0}) {
    const auto slow = stage_record(record_of(tone_epochs(2.0, 3, fs), fs), *backend);
    for (auto s : slow.stages) CHECK(s == Stage::N3);
    const auto fast = stage_record(record_of(tone_epochs(25.0, 3, fs), fs), *backend);
    for (auto s : fast.stages) CHECK(s == Stage::Wake);
  }
  const auto pre = preprocess_for_staging(record_of(testutil::white_noise(60 * 90, 3), 60.0));
  const auto p = stage_probabilities(pre, *backend);
  for (const auto& row : p.probs) {
    double sum = 0.0;
    for (double v : row) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("relative band powers of a pure tone") {
  const auto bands = relative_band_powers(testutil::sine(13.0, 60.0, 1800), 60.0);
  CHECK(bands[3] > 0.99);
  const auto zero = relative_band_powers(std::vector<double>(1800, 0.0), 60.0);
  for (double b : zero) CHECK(b == 0.0);
}

TEST_CASE("staging output is invariant to input scale") {
  auto x = tone_epochs(2.0, 4, 128.0);
  const auto y = tone_epochs(25.0, 4, 128.0);
  x.insert(x.end(), y.begin(), y.end());
  const auto rec = record_of(x, 128.0);
  const auto backend = baseline_bandpower_backend();
  const auto h = stage_record(rec, *backend);
  CHECK(stage_record(rec.scaled(3.0), *backend) == h);
  CHECK(stage_record(rec.scaled(0.01), *backend) == h);
}

TEST_CASE("precomputed backend") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::string csv = "wake,n1,n2,n3,rem\n";
  Hypnogram expect;
  for (int e = 0; e < 960; ++e) {
    StageVector row{};
    double sum = 0.0;
    for (auto& v : row) sum += (v = u(rng));
    for (std::size_t k = 0; k < 5; ++k) csv += format_double(row[k] / sum) + (k < 4 ? "," : "\n");
    expect.stages.push_back(argmax_stage(row));
  }
  const auto backend = precomputed_backend_from_text(csv);
  CHECK(hypnogram_from_probs(stage_probabilities(epochs_at_60(960), *backend)) == expect);
  CHECK(kind_of([&] { stage_probabilities(epochs_at_60(959), *backend); }) == ErrorKind::LengthMismatch);

  const auto renorm = precomputed_backend_from_text("0.5,0.6,0,0,0\n");
  const auto p = stage_probabilities(epochs_at_60(1), *renorm);
  CHECK(p.probs[0][1] == doctest::Approx(0.6 / 1.1).epsilon(1e-9));
  CHECK(kind_of([] { precomputed_backend_from_text("0.5,0.8,0,0,0\n"); }) == ErrorKind::NonProbabilityRow);
  CHECK(kind_of([] { precomputed_backend_from_text("-0.1,0.6,0.5,0,0\n"); }) == ErrorKind::NonProbabilityRow);
  CHECK(kind_of([] { precomputed_backend_from_text("0.5,0.5,0,0\n"); }) == ErrorKind::UnparsableRow);
}

}  // TEST_SUITE
