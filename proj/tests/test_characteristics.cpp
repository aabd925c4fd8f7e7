#include <doctest.h>

#include <cmath>
#include <random>

#include "sleeptk/characteristics.hpp"
#include "sleeptk/error.hpp"
#include "test_util.hpp"

using namespace sleeptk;
using namespace sleeptk::characteristics;

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

SignalRecord one_channel(std::vector<double> x, double fs, const std::string& label = "C3-A2") {
  SignalRecord r;
  r.channels.push_back({label, std::move(x), fs});
  r.validate_and_update();
  return r;
}

// Linear chirp from f0 at t0 to f1 at t0 + T, continued beyond both ends.
std::vector<double> chirp(double f0, double f1, double t0, double T, double fs, std::size_t n) {
  std::vector<double> x(n);
  const double k = (f1 - f0) / T;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i / fs - t0;
    x[i] = std::sin(2 * testutil::kPi * (f0 * t + 0.5 * k * t * t));
  }
  return x;
}

Hypnogram n2_epochs(std::size_t n2, std::size_t other) {
  Hypnogram h;
  h.stages.assign(n2, Stage::N2);
  h.stages.insert(h.stages.end(), other, Stage::Wake);
  return h;
}

}  // namespace

TEST_SUITE("characteristics") {

TEST_CASE("density") {
  EventList ev(30, Event{1.0, 1.0, {}});
  CHECK(spindle_density(ev, n2_epochs(20, 5)) == doctest::Approx(3.0));
  CHECK(spindle_density({}, n2_epochs(20, 0)) == 0.0);
  CHECK(kind_of([] { spindle_density({}, n2_epochs(0, 10)); }) == ErrorKind::NoN2Sleep);
  // Additive over two halves of equal N2 time.
  const double whole = spindle_density(EventList(10, Event{}), n2_epochs(8, 0));
  const double half = spindle_density(EventList(5, Event{}), n2_epochs(4, 0));
  CHECK(whole == doctest::Approx(half));
}

TEST_CASE("frequency of pure tones") {
  for (double fs : {100.0, 200.0, 256.0}) {
    for (double f : {10.5, 12.0, 13.0, 14.0, 15.5}) {
      const auto rec = one_channel(testutil::sine(f, fs, static_cast<std::size_t>(10 * fs), 20.0, 0.3), fs);
      for (double dur : {0.5, 1.0, 2.0}) {
        const double est = spindle_frequency(rec, {4.03, dur, {"C3-A2"}}, "C3-A2");
        INFO("fs " << fs << " f " << f << " dur " << dur);
        CHECK(std::abs(est - f) < 0.05);
      }
    }
  }
}

TEST_CASE("frequency of a chirp is its mean frequency") {
  const auto rec = one_channel(chirp(11.0, 15.0, 3.0, 1.0, 200.0, 1400), 200.0);
  CHECK(std::abs(spindle_frequency(rec, {3.0, 1.0, {}}, "C3-A2") - 13.0) < 0.2);
}

TEST_CASE("too few crossings and empty segments") {
  const auto rec = one_channel(testutil::sine(13.0, 100.0, 1000), 100.0);
  CHECK(kind_of([&] { spindle_frequency(rec, {2.0, 0.05, {}}, "C3-A2"); }) == ErrorKind::TooFewCrossings);
  CHECK(kind_of([&] { spindle_amplitude(rec, {50.0, 1.0, {}}, "C3-A2"); }) == ErrorKind::EmptySegment);
  CHECK(kind_of([&] { spindle_amplitude(rec, {2.0, 1.0, {}}, "F3"); }) == ErrorKind::ChannelNotFound);
}

TEST_CASE("amplitude conventions") {
  for (double fs : {100.0, 200.0, 256.0}) {
    const auto rec = one_channel(testutil::sine(13.0, fs, static_cast<std::size_t>(6 * fs), 8.0, 1.1), fs);
    const Event e{2.5, 1.0, {}};
    const double env = spindle_amplitude(rec, e, "C3-A2");
    CHECK(std::abs(env - 8.0) < 0.02 * 8.0);
    FeatureParams literal;
    literal.amplitude = AmplitudeConvention::Quadrature;
    CHECK(std::abs(spindle_amplitude(rec, e, "C3-A2", literal) - 2 * 8.0 / testutil::kPi) < 0.15);
    // Homogeneous of degree one.
    CHECK(spindle_amplitude(rec.scaled(3.5), e, "C3-A2") == doctest::Approx(3.5 * env).epsilon(1e-9));
  }
  CHECK(spindle_amplitude(one_channel(std::vector<double>(500, 0.0), 100.0), {1.0, 1.0, {}}, "C3-A2") == 0.0);
}

TEST_CASE("fast/slow split") {
  CHECK_FALSE(classify_fast_slow(13.0));
  CHECK(classify_fast_slow(13.01));
  CHECK_FALSE(classify_fast_slow(12.0));
}

TEST_CASE("features follow channel membership") {
  SignalRecord rec;
  rec.channels.push_back({"C3-A2", testutil::sine(12.0, 100.0, 2000, 10.0), 100.0});
  rec.channels.push_back({"C4-A1", testutil::sine(14.0, 100.0, 2000, 5.0), 100.0});
  rec.validate_and_update();
  const EventList ev{{2.0, 1.0, {"C3-A2"}}, {8.0, 1.0, {"C3-A2", "C4-A1"}}};
  const std::vector<std::string> chans{"C3-A2", "C4-A1"};
  const auto fs = compute_features(rec, ev, chans);
  REQUIRE(fs.features.size() == 3);
  CHECK(fs.features[2].channel == "C4-A1");
  CHECK(fs.features[2].is_fast);
  CHECK_FALSE(fs.features[0].is_fast);
  CHECK(fs.features[2].amplitude_uv == doctest::Approx(5.0).epsilon(0.03));
}

TEST_CASE("feature file round trip and aggregation") {
  SubjectFeatures s;
  s.n2_minutes = 10.0;
  s.channels = {"C3-A2", "F3-A2"};
  s.features = {{"C3-A2", 10, 1.0, 12.5, 20, false}, {"C3-A2", 20, 0.5, 13.5, 10, true},
                {"C3-A2", 30, 0.7, 14.5, 30, true}};
  const auto back = parse_features(format_features(s));
  CHECK(back.n2_minutes == 10.0);
  CHECK(back.channels == s.channels);
  REQUIRE(back.features.size() == 3);
  CHECK(back.features[1].frequency_hz == 13.5);

  const auto fast = aggregate_subject(back, Speed::Fast);
  REQUIRE(fast.size() == 2);
  CHECK(fast[0].count == 2);
  CHECK(fast[0].density_spm == doctest::Approx(0.2));
  CHECK(fast[0].duration_s == doctest::Approx(0.6));
  CHECK(fast[0].amplitude_uv == doctest::Approx(20.0));
  CHECK(fast[1].density_spm == 0.0);
  CHECK(std::isnan(fast[1].frequency_hz));
  CHECK(aggregate_subject(back, Speed::Slow)[0].count == 1);
  CHECK(kind_of([] { parse_features("channel,start_s\n"); }) == ErrorKind::MalformedHeader);
}

TEST_CASE("cohort table") {
  SubjectAggregates subjects;
  CohortMap cohorts;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "S" + std::to_string(i);
    subjects[id] = {{"C3-A2", 5, 2.0 + i % 3, 1.0, 13.5, 20.0 + i % 3}};
    cohorts[id] = i < 3 ? Cohort::HC : Cohort::BP;
  }
  auto t = cohort_table(subjects, cohorts);
  REQUIRE(t.cells.size() == 4);
  CHECK(t.cells[0].characteristic == "Density");
  CHECK(t.cells[0].p_value == doctest::Approx(1.0));
  CHECK(t.cells[0].hc.n == 3);
  CHECK(t.cells[1].test == "welch");

  t = cohort_table(subjects, cohorts, {{"Amplitude", "C3-A2"}});
  CHECK(t.cells[3].test == "wilcoxon");
  CHECK(t.cells[3].marker);
  const auto csv = format_cohort_table(t);
  CHECK(csv.starts_with("characteristic,channel,hc,bp,p_value,test,marker\nDensity,C3-A2,3.00 (1.00),3.00 (1.00),1.0000,welch,\n"));
  CHECK(csv.find("†") != std::string::npos);

  cohorts["S1"] = Cohort::BP;
  cohorts["S2"] = Cohort::BP;
  CHECK(kind_of([&] { cohort_table(subjects, cohorts); }) == ErrorKind::CohortTooSmall);
}

}  // TEST_SUITE
