#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sleeptk/error.hpp"
#include "sleeptk/record_io.hpp"
#include "test_util.hpp"

using namespace sleeptk;

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

std::string field(std::string v, std::size_t width) {
  v.resize(width, ' ');
  return v;
}

// Hand-built single-signal EDF with explicit calibration fields.
std::string build_edf(int n_records_declared, int n_records_present, int spr, const std::string& pmin,
                      const std::string& pmax, const std::string& dmin, const std::string& dmax,
                      const std::vector<std::int16_t>& digital, const std::string& version = "0") {
  std::string h;
  h += field(version, 8) + field("", 80) + field("", 80) + field("01.02.03", 8) + field("04.05.06", 8);
  h += field("512", 8) + field("", 44) + field(std::to_string(n_records_declared), 8) + field("1", 8) +
       field("1", 4);
  h += field("C3-A2", 16) + field("", 80) + field("uV", 8) + field(pmin, 8) + field(pmax, 8) +
       field(dmin, 8) + field(dmax, 8) + field("", 80) + field(std::to_string(spr), 8) + field("", 32);
  for (int r = 0; r < n_records_present; ++r) {
    for (int k = 0; k < spr; ++k) {
      const auto d = static_cast<std::uint16_t>(digital[(r * spr + k) % digital.size()]);
      h.push_back(static_cast<char>(d & 0xFF));
      h.push_back(static_cast<char>(d >> 8));
    }
  }
  return h;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("record_io") {

TEST_CASE("parse_edf reads a minimal one-channel file with identity calibration") {
  testutil::TempDir dir;
  std::vector<std::int16_t> digital(1000);
  for (int i = 0; i < 1000; ++i) digital[i] = static_cast<std::int16_t>(i - 500);
  write_bytes(dir / "min.edf", build_edf(10, 10, 100, "-32768", "32767", "-32768", "32767", digital));
  const auto rec = parse_edf(dir / "min.edf");
  REQUIRE(rec.channels.size() == 1);
  CHECK(rec.channels[0].label == "C3-A2");
  CHECK(rec.channels[0].fs == 100.0);
  CHECK(rec.channels[0].samples.size() == 1000);
  CHECK(rec.duration_s == doctest::Approx(10.0));
  for (int i = 0; i < 1000; ++i) CHECK(rec.channels[0].samples[i] == static_cast<double>(i - 500));
  REQUIRE(rec.start_time.has_value());
  CHECK(*rec.start_time == "01.02.03 04.05.06");
}

TEST_CASE("parse_edf applies the header calibration") {
  testutil::TempDir dir;
  write_bytes(dir / "cal.edf", build_edf(1, 1, 4, "-500", "500", "-32768", "32767", {0, -32768, 32767, 100}));
  const auto rec = parse_edf(dir / "cal.edf");
  const auto& s = rec.channels[0].samples;
  // (0 + 32768) * 1000 / 65535 - 500, evaluated by hand.
  CHECK(s[0] == doctest::Approx(0.0076295109483482).epsilon(1e-9));
  CHECK(s[1] == doctest::Approx(-500.0));
  CHECK(s[2] == doctest::Approx(500.0));
}

TEST_CASE("parse_edf detects truncated data") {
  testutil::TempDir dir;
  write_bytes(dir / "short.edf", build_edf(100, 50, 10, "-1", "1", "-32768", "32767", {1, 2, 3}));
  CHECK(kind_of([&] { parse_edf(dir / "short.edf"); }) == ErrorKind::InconsistentRecord);
}

TEST_CASE("parse_edf infers the record count when the header says -1") {
  testutil::TempDir dir;
  write_bytes(dir / "unk.edf", build_edf(-1, 7, 10, "-1", "1", "-32768", "32767", {1, 2, 3}));
  CHECK(parse_edf(dir / "unk.edf").channels[0].samples.size() == 70);
}

TEST_CASE("parse_edf rejects malformed and unsupported headers") {
  testutil::TempDir dir;
  write_bytes(dir / "ver.edf", build_edf(1, 1, 4, "-1", "1", "-32768", "32767", {0}, "1"));
  CHECK(kind_of([&] { parse_edf(dir / "ver.edf"); }) == ErrorKind::MalformedHeader);

  auto bdf = build_edf(1, 1, 4, "-1", "1", "-32768", "32767", {0});
  bdf[0] = static_cast<char>(0xFF);
  write_bytes(dir / "bdf.edf", bdf);
  CHECK(kind_of([&] { parse_edf(dir / "bdf.edf"); }) == ErrorKind::UnsupportedEncoding);

  write_bytes(dir / "tiny.edf", "0       ");
  CHECK(kind_of([&] { parse_edf(dir / "tiny.edf"); }) == ErrorKind::MalformedHeader);

  write_bytes(dir / "num.edf", build_edf(1, 1, 4, "abc", "1", "-32768", "32767", {0}));
  CHECK(kind_of([&] { parse_edf(dir / "num.edf"); }) == ErrorKind::MalformedHeader);

  CHECK(kind_of([&] { parse_edf(dir / "missing.edf"); }) == ErrorKind::FileNotFound);
}

TEST_CASE("write_edf output parses back to the written digital values") {
  testutil::TempDir dir;
  SignalRecord rec;
  rec.channels.push_back({"C3-A2", testutil::white_noise(2560, 1, 20.0), 256.0});
  rec.channels.push_back({"F3-A2", testutil::sine(13.0, 100.0, 1000, 37.5), 100.0});
  rec.validate_and_update();
  write_edf(rec, dir / "rt.edf");
  const auto back = parse_edf(dir / "rt.edf");
  REQUIRE(back.channels.size() == 2);
  CHECK(back.duration_s == doctest::Approx(10.0));
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& orig = rec.channels[c].samples;
    const auto& got = back.channels[c].samples;
    REQUIRE(got.size() == orig.size());
    double peak = 0.0;
    for (double v : orig) peak = std::max(peak, std::abs(v));
    // The writer's calibration is recoverable from the parsed extremes of
    // the digital range; invert it and compare digital values exactly.
    EdfCalibration cal{-std::ceil(peak * 1e4) / 1e4, std::ceil(peak * 1e4) / 1e4, -32768, 32767};
    if (peak >= 1000.0) cal = {-std::ceil(peak * 1e3) / 1e3, std::ceil(peak * 1e3) / 1e3, -32768, 32767};
    for (std::size_t i = 0; i < orig.size(); ++i) {
      CHECK(cal.to_digital(got[i]) == cal.to_digital(orig[i]));
    }
    CHECK(back.channels[c].fs == rec.channels[c].fs);
  }
}

TEST_CASE("calibration inversion is exact over the digital range") {
  const EdfCalibration cal{-123.4567, 123.4567, -32768, 32767};
  for (int d = -32768; d <= 32767; d += 7) CHECK(cal.to_digital(cal.to_physical(d)) == d);
}

TEST_CASE("hypnogram text format") {
  const auto h = parse_hypnogram("W\nN1\nN2");
  CHECK(h.stages == std::vector<Stage>{Stage::Wake, Stage::N1, Stage::N2});
  CHECK(parse_hypnogram("w\r\nrem\n\nn3\n").stages ==
        std::vector<Stage>{Stage::Wake, Stage::REM, Stage::N3});
  CHECK(kind_of([] { parse_hypnogram("W\nN4\n"); }) == ErrorKind::UnknownStageToken);
  CHECK(kind_of([] { parse_hypnogram("\n\n"); }) == ErrorKind::EmptyHypnogram);
}

TEST_CASE("hypnogram write/read round trip") {
  testutil::TempDir dir;
  Hypnogram h;
  std::mt19937 rng(5);
  for (int i = 0; i < 960; ++i) h.stages.push_back(kAllStages[rng() % kNumStages]);
  write_hypnogram(h, dir / "h.txt");
  CHECK(read_hypnogram(dir / "h.txt") == h);
}

TEST_CASE("event CSV format") {
  const auto one = parse_events("12.5,0.8,C3-A2");
  REQUIRE(one.size() == 1);
  CHECK(one[0].start_s == 12.5);
  CHECK(one[0].duration_s == 0.8);
  CHECK(one[0].channels == std::vector<std::string>{"C3-A2"});

  const auto sorted = parse_events("start_s,duration_s,channels\n20,1,C4-A1|C3-A2\n3.25,0.5,C3-A2\n");
  REQUIRE(sorted.size() == 2);
  CHECK(sorted[0].start_s == 3.25);
  CHECK(sorted[1].channels == std::vector<std::string>{"C3-A2", "C4-A1"});

  CHECK(kind_of([] { parse_events("1.0,-0.5,C3-A2"); }) == ErrorKind::NegativeDuration);
  CHECK(kind_of([] { parse_events("1.0,abc,C3-A2"); }) == ErrorKind::UnparsableRow);
  CHECK(kind_of([] { parse_events("1.0,0.5"); }) == ErrorKind::UnparsableRow);
}

TEST_CASE("event CSV round trip on random lists") {
  testutil::TempDir dir;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  std::uniform_real_distribution<double> d(0.01, 3.0);
  const std::vector<std::string> labels = {"C3-A2", "C4-A1", "F3-A2", "F4-A1"};
  for (int trial = 0; trial < 20; ++trial) {
    EventList events;
    for (int i = 0; i < 30; ++i) {
      Event e{u(rng), d(rng), {}};
      for (const auto& l : labels) {
        if (rng() % 2) e.channels.push_back(l);
      }
      events.push_back(e);
    }
    sort_events(events);
    write_events(events, dir / "e.csv");
    CHECK(read_events(dir / "e.csv") == events);
  }
}

TEST_CASE("record invariants") {
  SignalRecord rec;
  rec.channels.push_back({"A", {1.0, 2.0}, 2.0});
  rec.channels.push_back({"A", {1.0}, 1.0});
  CHECK(kind_of([&] { rec.validate_and_update(); }) == ErrorKind::InvalidArgument);
  rec.channels[1].label = "B";
  rec.validate_and_update();
  CHECK(rec.duration_s == 1.0);
  CHECK(kind_of([&] { rec.channel("C"); }) == ErrorKind::ChannelNotFound);
}

}  // TEST_SUITE
