#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sleeptk/characteristics.hpp"
#include "sleeptk/config.hpp"
#include "sleeptk/spindles.hpp"
#include "sleeptk/staging.hpp"

namespace sleeptk::pipeline {

struct RunResult {
  Hypnogram hypnogram;
  std::optional<staging::StageProbabilities> probabilities;  // absent with expert stages
  spindles::RecordDetection detection;
  characteristics::FeatureSet features;
  double n2_minutes{0.0};
  // Union events per N2 minute; empty when the hypnogram has no N2 (NoN2Sleep).
  std::optional<double> density_spm;

  bool no_n2() const { return !density_spm.has_value(); }
  characteristics::SubjectFeatures subject_features(std::span<const std::string> channels) const;
};

// stage -> restrict to N2 -> detect -> postprocess -> union -> characterize.
// Throws ChannelNotFound and whatever the modules raise.
RunResult run_full(const SignalRecord& rec, const staging::ClassifierBackend& backend,
                   const spindles::Detector& detector, std::span<const std::string> channels,
                   const Config& config = {});

// Same chain starting from an expert hypnogram. Throws LengthMismatch when
// the hypnogram does not have one entry per whole epoch of the record.
RunResult run_with_expert_stages(const SignalRecord& rec, const Hypnogram& hyp, const spindles::Detector& detector,
                                 std::span<const std::string> channels, const Config& config = {});

struct InputFile {
  std::string role;
  std::filesystem::path path;
};

struct ManifestInfo {
  std::string mode;  // "full" or "expert_stages"
  std::string backend;
  std::string detector;
  std::vector<std::string> channels;
  std::vector<InputFile> inputs;
  std::optional<std::uint64_t> seed;
};

// Deterministic JSON: inputs with byte size and FNV-1a hash, config and its
// hash, tool version, output names and counts. No timestamps, so identical
// runs produce identical bytes.
std::string format_manifest(const ManifestInfo& info, const Config& config, const RunResult& result);

// Writes hypnogram.txt, probabilities.csv (full mode), events_raw.csv,
// events_postprocessed.csv, events.csv, features.csv and manifest.json.
void write_artifacts(const std::filesystem::path& dir, const ManifestInfo& info, const Config& config,
                     const RunResult& result);

std::string_view tool_version();

}  // namespace sleeptk::pipeline
