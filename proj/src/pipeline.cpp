#include "sleeptk/pipeline.hpp"

#include <json.hpp>

#include "sleeptk/error.hpp"

namespace sleeptk::pipeline {

namespace {

using json = nlohmann::json;

void require_channels(const SignalRecord& rec, std::span<const std::string> channels) {
  if (channels.empty()) throw Error(ErrorKind::InvalidArgument, "no channels selected");
  for (const auto& c : channels) rec.channel(c);
}

RunResult detect_and_characterize(const SignalRecord& rec, Hypnogram hyp, const spindles::Detector& detector,
                                  std::span<const std::string> channels, const Config& config) {
  RunResult r;
  r.hypnogram = std::move(hyp);
  r.detection = spindles::detect_record(rec, r.hypnogram, channels, detector, config.detection);
  r.features = characteristics::compute_features(rec, r.detection.events, channels, config.features);
  r.n2_minutes = characteristics::n2_minutes(r.hypnogram);
  if (r.n2_minutes > 0.0) r.density_spm = characteristics::spindle_density(r.detection.events, r.hypnogram);
  return r;
}

EventList tagged(const std::vector<spindles::ChannelDetection>& per_channel, bool raw) {
  EventList out;
  for (const auto& c : per_channel) {
    for (const auto& e : raw ? c.raw : c.postprocessed) out.push_back({e.start_s, e.duration_s, {c.channel}});
  }
  sort_events(out);
  return out;
}

}  // namespace

characteristics::SubjectFeatures RunResult::subject_features(std::span<const std::string> channels) const {
  return {n2_minutes, {channels.begin(), channels.end()}, features.features};
}

RunResult run_full(const SignalRecord& rec, const staging::ClassifierBackend& backend,
                   const spindles::Detector& detector, std::span<const std::string> channels, const Config& config) {
  require_channels(rec, channels);
  auto probs = staging::stage_probabilities(staging::preprocess_for_staging(rec, config.staging), backend,
                                            config.staging);
  auto hyp = staging::hypnogram_from_probs(probs);
  auto r = detect_and_characterize(rec, std::move(hyp), detector, channels, config);
  r.probabilities = std::move(probs);
  return r;
}

RunResult run_with_expert_stages(const SignalRecord& rec, const Hypnogram& hyp, const spindles::Detector& detector,
                                 std::span<const std::string> channels, const Config& config) {
  require_channels(rec, channels);
  const std::size_t n = staging::epoch_count(rec);
  if (hyp.size() != n) {
    throw Error(ErrorKind::LengthMismatch, "hypnogram has " + std::to_string(hyp.size()) + " epochs, record has " +
                                               std::to_string(n));
  }
  return detect_and_characterize(rec, hyp, detector, channels, config);
}

std::string_view tool_version() { return SLEEPTK_VERSION; }

std::string format_manifest(const ManifestInfo& info, const Config& config, const RunResult& result) {
  json j;
  j["tool"] = "sleeptk";
  j["version"] = tool_version();
  j["mode"] = info.mode;
  j["backend"] = info.backend;
  j["detector"] = info.detector;
  j["channels"] = info.channels;
  j["inputs"] = json::array();
  for (const auto& in : info.inputs) {
    const auto bytes = read_file(in.path);
    j["inputs"].push_back({{"role", in.role},
                           {"path", in.path.generic_string()},
                           {"bytes", bytes.size()},
                           {"fnv1a", fnv1a_hex(bytes)}});
  }
  j["seed"] = info.seed ? json(*info.seed) : json(nullptr);
  j["config_hash"] = config_hash(config);
  j["config"] = json::parse(format_config(config));
  json out = {{"hypnogram", "hypnogram.txt"},
              {"events_raw", "events_raw.csv"},
              {"events_postprocessed", "events_postprocessed.csv"},
              {"events", "events.csv"},
              {"features", "features.csv"}};
  if (result.probabilities) out["probabilities"] = "probabilities.csv";
  j["outputs"] = out;
  json counts = {{"epochs", result.hypnogram.size()},
                 {"n2_minutes", result.n2_minutes},
                 {"events", result.detection.events.size()},
                 {"features", result.features.features.size()},
                 {"features_skipped", result.features.skipped}};
  counts["density_spm"] = result.density_spm ? json(*result.density_spm) : json(nullptr);
  if (result.no_n2()) counts["warning"] = "NoN2Sleep";
  j["summary"] = counts;
  return j.dump(2) + "\n";
}

void write_artifacts(const std::filesystem::path& dir, const ManifestInfo& info, const Config& config,
                     const RunResult& result) {
  std::filesystem::create_directories(dir);
  write_hypnogram(result.hypnogram, dir / "hypnogram.txt");
  if (result.probabilities) {
    write_file_atomic(dir / "probabilities.csv", staging::format_probabilities(*result.probabilities));
  }
  write_events(tagged(result.detection.channels, true), dir / "events_raw.csv");
  write_events(tagged(result.detection.channels, false), dir / "events_postprocessed.csv");
  write_events(result.detection.events, dir / "events.csv");
  write_file_atomic(dir / "features.csv", characteristics::format_features(result.subject_features(info.channels)));
  write_file_atomic(dir / "manifest.json", format_manifest(info, config, result));
}

}  // namespace sleeptk::pipeline
