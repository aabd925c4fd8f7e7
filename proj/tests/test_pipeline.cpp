#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sleeptk/config.hpp"
#include "sleeptk/error.hpp"
#include "sleeptk/metrics.hpp"
#include "sleeptk/pipeline.hpp"
#include "sleeptk/synth.hpp"
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

struct Fixture {
  synth::SynthSpec spec;
  Hypnogram hyp;
  synth::SynthRecord rec;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.spec.seed = 11;
    x.spec.duration_h = 1.0;
    x.spec.channels = {"C3-A2", "C4-A1"};
    x.hyp = synth::gen_hypnogram(x.spec);
    x.rec = synth::gen_record(x.spec, x.hyp);
    return x;
  }();
  return f;
}

bool within_n2(const Event& e, const Hypnogram& h) {
  const auto first = static_cast<std::size_t>(std::floor(e.start_s / 30.0));
  const auto last = static_cast<std::size_t>(std::floor((e.end_s() - 1e-9) / 30.0));
  if (last >= h.size()) return false;
  for (std::size_t k = first; k <= last; ++k) {
    if (h.stages[k] != Stage::N2) return false;
  }
  return true;
}

// Maximal N2 runs as [first, end) epoch pairs.
std::vector<std::pair<std::size_t, std::size_t>> n2_runs(const Hypnogram& h) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t e = 0; e < h.size();) {
    if (h.stages[e] != Stage::N2) {
      ++e;
      continue;
    }
    std::size_t end = e;
    while (end < h.size() && h.stages[end] == Stage::N2) ++end;
    out.emplace_back(e, end);
    e = end;
  }
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config defaults carry the published parameter values") {
  const Config c;
  CHECK(c.iou_threshold == 0.2);
  CHECK(c.detection.postprocess.merge_below_s == 0.3);
  CHECK(c.detection.postprocess.merge_gap_s == 0.1);
  CHECK(c.detection.postprocess.min_duration_s == 0.3);
  CHECK(c.detection.postprocess.max_duration_s == 2.5);
  CHECK(c.features.fast_threshold_hz == 13.0);
  CHECK(c.staging.clip_limit == 20.0);
  CHECK(c.detection.preprocess.clip_limit == 20.0);
  CHECK(c.staging.window_epochs == 21);
  CHECK(c.staging.buffer_epochs == 20);
  CHECK(c.detection.preprocess.filter_order == 20);
  CHECK(c.detection.preprocess.highpass_hz == 0.3);
  CHECK(c.detection.preprocess.lowpass_hz == 30.0);
  CHECK(c.detection.preprocess.target_fs_hz == 100.0);
  CHECK(c.features.band_low_hz == 10.0);
  CHECK(c.features.band_high_hz == 16.0);
  CHECK(c.features.filter_order == 4);
  CHECK(c.min_joint_items == 5);
}

TEST_CASE("config parse, override, round trip and rejection") {
  const Config d;
  CHECK(format_config(parse_config("{}")) == format_config(d));
  CHECK(format_config(parse_config(format_config(d))) == format_config(d));

  const auto c = parse_config(R"({"version": 1, "evaluation": {"iou_threshold": 0.3},
                                  "postprocess": {"merge_gap_s": 0.2}, "features": {"amplitude": "quadrature"}})");
  CHECK(c.iou_threshold == 0.3);
  CHECK(c.detection.postprocess.merge_gap_s == 0.2);
  CHECK(c.detection.postprocess.merge_below_s == 0.3);
  CHECK(c.features.amplitude == characteristics::AmplitudeConvention::Quadrature);
  CHECK(format_config(parse_config(format_config(c))) == format_config(c));
  CHECK(config_hash(c) != config_hash(d));
  CHECK(config_hash(d) == config_hash(Config{}));

  CHECK(kind_of([] { parse_config("{\"stagin\": {}}"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("{\"staging\": {\"window\": 3}}"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("{\"version\": 2}"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("{\"staging\": {\"clip_limit\": \"x\"}}"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("{\"postprocess\": {\"max_duration_s\": 0.1}}"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("not json"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { parse_config("{\"evaluation\": {\"absent_stages\": \"maybe\"}}"); }) ==
        ErrorKind::InvalidConfig);
}

TEST_CASE("FNV-1a reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("run_full recovers planted spindles at fixture SNR") {
  const auto& f = fixture();
  const auto backend = staging::baseline_bandpower_backend();
  const auto detector = spindles::baseline_detector();
  const auto r = pipeline::run_full(f.rec.record, *backend, *detector, f.spec.channels);
  CHECK(r.hypnogram.size() == f.hyp.size());
  CHECK(r.probabilities.has_value());
  CHECK(metrics::macro_f1(r.hypnogram, f.hyp) > 0.8);
  CHECK(metrics::iou_f1(r.detection.events, f.rec.ground_truth) >= 0.9);
  for (const auto& e : r.detection.events) CHECK(within_n2(e, r.hypnogram));
  CHECK(!r.no_n2());
  CHECK(*r.density_spm == doctest::Approx(static_cast<double>(r.detection.events.size()) / r.n2_minutes));
  CHECK(!r.features.features.empty());
}

TEST_CASE("scaling the record scales amplitudes and nothing else") {
  const auto& f = fixture();
  const auto backend = staging::baseline_bandpower_backend();
  const auto detector = spindles::baseline_detector();
  const auto a = pipeline::run_full(f.rec.record, *backend, *detector, f.spec.channels);
  const auto b = pipeline::run_full(f.rec.record.scaled(3.0), *backend, *detector, f.spec.channels);
  CHECK(a.hypnogram == b.hypnogram);
  CHECK(a.detection.events == b.detection.events);
  REQUIRE(a.features.features.size() == b.features.features.size());
  for (std::size_t i = 0; i < a.features.features.size(); ++i) {
    CHECK(b.features.features[i].amplitude_uv == doctest::Approx(3.0 * a.features.features[i].amplitude_uv).epsilon(1e-9));
    CHECK(b.features.features[i].frequency_hz == doctest::Approx(a.features.features[i].frequency_hz).epsilon(1e-12));
  }
}

TEST_CASE("expert stages equal to the model's reproduce run_full") {
  const auto& f = fixture();
  const auto backend = staging::baseline_bandpower_backend();
  const auto detector = spindles::baseline_detector();
  const auto full = pipeline::run_full(f.rec.record, *backend, *detector, f.spec.channels);
  const auto expert = pipeline::run_with_expert_stages(f.rec.record, full.hypnogram, *detector, f.spec.channels);
  CHECK(expert.detection.events == full.detection.events);
  CHECK(expert.features.features.size() == full.features.features.size());
  CHECK(!expert.probabilities.has_value());
}

TEST_CASE("expert stages without N2 give no events and flag NoN2Sleep") {
  const auto& f = fixture();
  const auto detector = spindles::baseline_detector();
  Hypnogram none;
  none.stages.assign(f.hyp.size(), Stage::N1);
  const auto r = pipeline::run_with_expert_stages(f.rec.record, none, *detector, f.spec.channels);
  CHECK(r.detection.events.empty());
  CHECK(r.no_n2());
  CHECK(r.n2_minutes == 0.0);
}

TEST_CASE("expert hypnogram length must match the record") {
  const auto& f = fixture();
  const auto detector = spindles::baseline_detector();
  Hypnogram shorter = f.hyp;
  shorter.stages.pop_back();
  CHECK(kind_of([&] { pipeline::run_with_expert_stages(f.rec.record, shorter, *detector, f.spec.channels); }) ==
        ErrorKind::LengthMismatch);
  const std::vector<std::string> bad = {"Cz"};
  CHECK(kind_of([&] { pipeline::run_with_expert_stages(f.rec.record, f.hyp, *detector, bad); }) ==
        ErrorKind::ChannelNotFound);
}

TEST_CASE("a larger N2 mask keeps the events of unchanged blocks") {
  // Removing N2 epochs changes the blocks they belonged to (and each block's
  // percentile threshold), so only blocks present unchanged in both masks
  // must agree exactly; over all events, most of the smaller mask's events
  // still overlap an event of the larger one.
  const auto& f = fixture();
  const auto detector = spindles::baseline_detector();
  Hypnogram smaller = f.hyp;
  std::size_t flipped = 0;
  for (std::size_t e = 0; e < smaller.size(); e += 7) {
    if (smaller.stages[e] == Stage::N2) {
      smaller.stages[e] = Stage::N1;
      ++flipped;
    }
  }
  REQUIRE(flipped > 0);
  const auto big = pipeline::run_with_expert_stages(f.rec.record, f.hyp, *detector, f.spec.channels);
  const auto small = pipeline::run_with_expert_stages(f.rec.record, smaller, *detector, f.spec.channels);
  for (const auto& e : small.detection.events) CHECK(within_n2(e, smaller));

  const auto big_runs = n2_runs(f.hyp);
  std::size_t overlapped = 0;
  for (const auto& e : small.detection.events) {
    bool hit = false;
    for (const auto& g : big.detection.events) hit = hit || (g.start_s < e.end_s() && e.start_s < g.end_s());
    overlapped += hit;
  }
  CHECK(static_cast<double>(overlapped) >= 0.9 * static_cast<double>(small.detection.events.size()));

  for (const auto& run : n2_runs(smaller)) {
    if (std::find(big_runs.begin(), big_runs.end(), run) == big_runs.end()) continue;
    const double lo = static_cast<double>(run.first) * 30.0;
    const double hi = static_cast<double>(run.second) * 30.0;
    auto inside = [&](const EventList& ev) {
      EventList out;
      for (const auto& e : ev) {
        if (e.start_s >= lo && e.end_s() <= hi) out.push_back(e);
      }
      return out;
    };
    CHECK(inside(small.detection.events) == inside(big.detection.events));
  }
}

TEST_CASE("artifacts and manifest are deterministic") {
  const auto& f = fixture();
  testutil::TempDir dir;
  write_edf(f.rec.record, dir / "rec.edf");
  const auto rec = parse_edf(dir / "rec.edf");
  const auto backend = staging::baseline_bandpower_backend();
  const auto detector = spindles::baseline_detector();
  pipeline::ManifestInfo info{"full", "baseline", "baseline", f.spec.channels, {{"record", dir / "rec.edf"}}, 11};
  const Config config;
  for (const char* out : {"a", "b"}) {
    const auto r = pipeline::run_full(rec, *backend, *detector, f.spec.channels, config);
    pipeline::write_artifacts(dir / out, info, config, r);
  }
  for (const char* name : {"hypnogram.txt", "probabilities.csv", "events_raw.csv", "events_postprocessed.csv",
                           "events.csv", "features.csv", "manifest.json"}) {
    INFO(name);
    REQUIRE(std::filesystem::exists(dir / "a" / name));
    CHECK(read_file(dir / "a" / name) == read_file(dir / "b" / name));
  }
  const auto manifest = read_file(dir / "a" / "manifest.json");
  CHECK(manifest.find(config_hash(config)) != std::string::npos);
  CHECK(manifest.find(fnv1a_hex(read_file(dir / "rec.edf"))) != std::string::npos);
  const auto feats = characteristics::read_features(dir / "a" / "features.csv");
  CHECK(feats.channels == f.spec.channels);
  CHECK(!read_events(dir / "a" / "events.csv").empty());
}

}  // TEST_SUITE
