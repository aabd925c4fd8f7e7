#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sleeptk/characteristics.hpp"
#include "sleeptk/metrics.hpp"
#include "sleeptk/spindles.hpp"
#include "sleeptk/staging.hpp"

namespace sleeptk {

inline constexpr int kConfigVersion = 1;

// Every tunable default in one place. Unknown keys are rejected so that a
// typo in a sensitivity run cannot silently fall back to a default.
struct Config {
  staging::StagingParams staging;
  spindles::BaselineParams baseline;
  spindles::DetectionParams detection;
  characteristics::FeatureParams features;
  double iou_threshold{metrics::kDefaultIouThreshold};
  std::size_t min_joint_items{metrics::kDefaultMinJointItems};
  metrics::AbsentStagePolicy absent_stages{metrics::AbsentStagePolicy::Exclude};
};

// Partial documents are merged over the defaults. Throws InvalidConfig.
Config parse_config(std::string_view json_text);
Config read_config(const std::filesystem::path& path);
// Complete document including "version"; parse_config(format_config(c))
// reproduces c.
std::string format_config(const Config& c);
// FNV-1a 64 over format_config, as 16 hex digits.
std::string config_hash(const Config& c);
// FNV-1a 64 of arbitrary bytes, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace sleeptk
