#include "sleeptk/config.hpp"

#include <json.hpp>

#include <cstdio>
#include <set>

#include "sleeptk/error.hpp"

namespace sleeptk {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); }

// Reads the keys present in `j` into the bound fields; anything else fails.
class Section {
 public:
  Section(const json& parent, const char* name) : name_(name) {
    if (!parent.contains(name)) return;
    node_ = &parent.at(name);
    if (!node_->is_object()) fail(std::string(name) + " must be an object");
  }
  ~Section() noexcept(false) {
    if (node_ == nullptr || std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : node_->items()) {
      if (!seen_.contains(key)) fail("unknown key " + name_ + "." + key);
    }
  }

  template <typename T>
  Section& get(const char* key, T& field) {
    seen_.insert(key);
    if (node_ != nullptr && node_->contains(key)) {
      try {
        field = node_->at(key).get<T>();
      } catch (const json::exception&) {
        fail(name_ + "." + key + " has the wrong type");
      }
    }
    return *this;
  }

 private:
  std::string name_;
  const json* node_{nullptr};
  std::set<std::string> seen_;
};

std::string absent_name(metrics::AbsentStagePolicy p) {
  switch (p) {
    case metrics::AbsentStagePolicy::ScoreOne: return "score_one";
    case metrics::AbsentStagePolicy::ScoreZero: return "score_zero";
    default: return "exclude";
  }
}

metrics::AbsentStagePolicy parse_absent(const std::string& s) {
  if (s == "exclude") return metrics::AbsentStagePolicy::Exclude;
  if (s == "score_one") return metrics::AbsentStagePolicy::ScoreOne;
  if (s == "score_zero") return metrics::AbsentStagePolicy::ScoreZero;
  fail("evaluation.absent_stages must be exclude, score_one or score_zero");
}

std::string amplitude_name(characteristics::AmplitudeConvention a) {
  return a == characteristics::AmplitudeConvention::Quadrature ? "quadrature" : "envelope";
}

characteristics::AmplitudeConvention parse_amplitude(const std::string& s) {
  if (s == "envelope") return characteristics::AmplitudeConvention::Envelope;
  if (s == "quadrature") return characteristics::AmplitudeConvention::Quadrature;
  fail("features.amplitude must be envelope or quadrature");
}

void check(const Config& c) {
  const auto& st = c.staging;
  if (!(st.band_low_hz > 0 && st.band_high_hz > st.band_low_hz)) fail("staging band is invalid");
  if (st.filter_order < 1 || c.detection.preprocess.filter_order < 1 || c.baseline.filter_order < 1 ||
      c.features.filter_order < 1) {
    fail("filter orders must be positive");
  }
  if (!(st.target_fs_hz > 0) || !(c.detection.preprocess.target_fs_hz > 0)) fail("target rates must be positive");
  if (!(st.clip_limit > 0) || !(c.detection.preprocess.clip_limit > 0)) fail("clip limits must be positive");
  if (st.window_epochs == 0) fail("staging.window_epochs must be positive");
  if (!(st.probability_floor > 0 && st.probability_floor < 0.2)) fail("staging.probability_floor must be in (0, 0.2)");
  if (!(c.baseline.percentile > 0 && c.baseline.percentile < 100)) fail("baseline.percentile must be in (0, 100)");
  const auto& pp = c.detection.postprocess;
  if (!(pp.min_duration_s >= 0 && pp.max_duration_s > pp.min_duration_s)) fail("postprocess duration band is invalid");
  if (!(pp.merge_gap_s >= 0) || !(pp.merge_below_s >= 0)) fail("postprocess merge parameters must be non-negative");
  if (!(c.features.band_high_hz > c.features.band_low_hz && c.features.band_low_hz > 0)) fail("features band is invalid");
  if (!(c.features.pad_s >= 0)) fail("features.pad_s must be non-negative");
  if (!(c.iou_threshold >= 0 && c.iou_threshold < 1)) fail("evaluation.iou_threshold must be in [0, 1)");
}

}  // namespace

Config parse_config(std::string_view json_text) {
  Config c;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> top = {"version", "staging", "detection", "baseline", "postprocess",
                                              "features", "evaluation"};
    if (!top.contains(key)) fail("unknown key " + key);
  }
  if (j.contains("version") && j.at("version") != kConfigVersion) {
    fail("unsupported config version " + j.at("version").dump());
  }
  {
    Section s(j, "staging");
    s.get("band_low_hz", c.staging.band_low_hz)
        .get("band_high_hz", c.staging.band_high_hz)
        .get("filter_order", c.staging.filter_order)
        .get("target_fs_hz", c.staging.target_fs_hz)
        .get("clip_limit", c.staging.clip_limit)
        .get("window_epochs", c.staging.window_epochs)
        .get("buffer_epochs", c.staging.buffer_epochs)
        .get("probability_floor", c.staging.probability_floor);
  }
  {
    auto& p = c.detection.preprocess;
    Section s(j, "detection");
    s.get("highpass_hz", p.highpass_hz)
        .get("lowpass_hz", p.lowpass_hz)
        .get("filter_order", p.filter_order)
        .get("target_fs_hz", p.target_fs_hz)
        .get("clip_limit", p.clip_limit);
  }
  {
    Section s(j, "baseline");
    s.get("band_low_hz", c.baseline.band_low_hz)
        .get("band_high_hz", c.baseline.band_high_hz)
        .get("filter_order", c.baseline.filter_order)
        .get("rms_window_s", c.baseline.rms_window_s)
        .get("percentile", c.baseline.percentile)
        .get("min_duration_s", c.baseline.min_duration_s);
  }
  {
    auto& p = c.detection.postprocess;
    Section s(j, "postprocess");
    s.get("merge_below_s", p.merge_below_s)
        .get("merge_gap_s", p.merge_gap_s)
        .get("min_duration_s", p.min_duration_s)
        .get("max_duration_s", p.max_duration_s);
  }
  {
    std::string amplitude = amplitude_name(c.features.amplitude);
    Section s(j, "features");
    s.get("band_low_hz", c.features.band_low_hz)
        .get("band_high_hz", c.features.band_high_hz)
        .get("filter_order", c.features.filter_order)
        .get("pad_s", c.features.pad_s)
        .get("fast_threshold_hz", c.features.fast_threshold_hz)
        .get("amplitude", amplitude);
    c.features.amplitude = parse_amplitude(amplitude);
  }
  {
    std::string absent = absent_name(c.absent_stages);
    Section s(j, "evaluation");
    s.get("iou_threshold", c.iou_threshold).get("min_joint_items", c.min_joint_items).get("absent_stages", absent);
    c.absent_stages = parse_absent(absent);
  }
  check(c);
  return c;
}

Config read_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string format_config(const Config& c) {
  json j;
  j["version"] = kConfigVersion;
  j["staging"] = {{"band_low_hz", c.staging.band_low_hz},
                  {"band_high_hz", c.staging.band_high_hz},
                  {"filter_order", c.staging.filter_order},
                  {"target_fs_hz", c.staging.target_fs_hz},
                  {"clip_limit", c.staging.clip_limit},
                  {"window_epochs", c.staging.window_epochs},
                  {"buffer_epochs", c.staging.buffer_epochs},
                  {"probability_floor", c.staging.probability_floor}};
  const auto& p = c.detection.preprocess;
  j["detection"] = {{"highpass_hz", p.highpass_hz},
                    {"lowpass_hz", p.lowpass_hz},
                    {"filter_order", p.filter_order},
                    {"target_fs_hz", p.target_fs_hz},
                    {"clip_limit", p.clip_limit}};
  j["baseline"] = {{"band_low_hz", c.baseline.band_low_hz},
                   {"band_high_hz", c.baseline.band_high_hz},
                   {"filter_order", c.baseline.filter_order},
                   {"rms_window_s", c.baseline.rms_window_s},
                   {"percentile", c.baseline.percentile},
                   {"min_duration_s", c.baseline.min_duration_s}};
  const auto& pp = c.detection.postprocess;
  j["postprocess"] = {{"merge_below_s", pp.merge_below_s},
                      {"merge_gap_s", pp.merge_gap_s},
                      {"min_duration_s", pp.min_duration_s},
                      {"max_duration_s", pp.max_duration_s}};
  j["features"] = {{"band_low_hz", c.features.band_low_hz},
                   {"band_high_hz", c.features.band_high_hz},
                   {"filter_order", c.features.filter_order},
                   {"pad_s", c.features.pad_s},
                   {"fast_threshold_hz", c.features.fast_threshold_hz},
                   {"amplitude", amplitude_name(c.features.amplitude)}};
  j["evaluation"] = {{"iou_threshold", c.iou_threshold},
                     {"min_joint_items", c.min_joint_items},
                     {"absent_stages", absent_name(c.absent_stages)}};
  return j.dump(2) + "\n";
}

std::string config_hash(const Config& c) { return fnv1a_hex(format_config(c)); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sleeptk
