#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sleeptk/record_io.hpp"
#include "sleeptk/stats.hpp"

namespace sleeptk::characteristics {

enum class AmplitudeConvention {
  Envelope,    // mean |x + iH(x)|
  Quadrature,  // mean |H(x)|
};

struct FeatureParams {
  double band_low_hz{10.0};
  double band_high_hz{16.0};
  int filter_order{4};
  double pad_s{0.5};
  double fast_threshold_hz{13.0};
  AmplitudeConvention amplitude{AmplitudeConvention::Envelope};
};

struct SpindleFeatures {
  std::string channel;
  double start_s{0.0};
  double duration_s{0.0};
  double frequency_hz{0.0};
  double amplitude_uv{0.0};
  bool is_fast{false};
};

// Events per minute of N2. Throws NoN2Sleep.
double spindle_density(const EventList& events, const Hypnogram& hyp);
double n2_minutes(const Hypnogram& hyp);

// Mean of 1 / (2 * interval) over zero-crossing intervals of the 10-16 Hz
// zero-phase filtered raw segment; crossings are located by linear
// interpolation. The segment is filtered with pad_s of surrounding signal on
// each side. Throws ChannelNotFound, EmptySegment, TooFewCrossings (< 3).
double spindle_frequency(const SignalRecord& rec, const Event& event, std::string_view channel,
                         const FeatureParams& params = {});

// Mean analytic envelope (or |quadrature|) of the same filtered segment.
// Throws ChannelNotFound, EmptySegment.
double spindle_amplitude(const SignalRecord& rec, const Event& event, std::string_view channel,
                         const FeatureParams& params = {});

// fast <=> f > threshold (13 Hz is slow).
bool classify_fast_slow(double frequency_hz, double threshold_hz = 13.0);

struct FeatureSet {
  std::vector<SpindleFeatures> features;
  std::size_t skipped{0};  // (event, channel) pairs with too few zero crossings
};

// Features of every event on each requested channel listed in the event's
// channel set, computed from that channel's own raw signal.
FeatureSet compute_features(const SignalRecord& rec, const EventList& events,
                            std::span<const std::string> channels, const FeatureParams& params = {});

// Per-subject feature file: "# n2_minutes=<v>" and "# channels=<a|b>"
// comment lines, then channel,start_s,duration_s,frequency_hz,amplitude_uv,is_fast.
struct SubjectFeatures {
  double n2_minutes{0.0};
  std::vector<std::string> channels;
  std::vector<SpindleFeatures> features;
};
std::string format_features(const SubjectFeatures& s);
SubjectFeatures parse_features(std::string_view text);
SubjectFeatures read_features(const std::filesystem::path& path);

enum class Speed { Fast, Slow, All };
// Throws InvalidArgument.
Speed parse_speed(std::string_view s);

inline constexpr std::array<std::string_view, 4> kCharacteristics = {"Density", "Duration", "Frequency",
                                                                     "Amplitude"};

// Subject-level means per channel for one speed class. NaN marks a mean
// over zero spindles (density is then 0, not NaN).
struct ChannelAggregate {
  std::string channel;
  std::size_t count{0};
  double density_spm{0.0};
  double duration_s{0.0};
  double frequency_hz{0.0};
  double amplitude_uv{0.0};

  double value(std::string_view characteristic) const;
};

// Throws NoN2Sleep when n2_minutes is zero.
std::vector<ChannelAggregate> aggregate_subject(const SubjectFeatures& s, Speed speed,
                                                double fast_threshold_hz = 13.0);

enum class Cohort { HC, BP };
Cohort parse_cohort(std::string_view s);
std::string_view cohort_name(Cohort c);

using SubjectAggregates = std::map<std::string, std::vector<ChannelAggregate>>;
using CohortMap = std::map<std::string, Cohort>;
// (characteristic, channel) cells tested with the rank-sum test.
using CellSet = std::set<std::pair<std::string, std::string>>;

struct CohortCell {
  std::string characteristic;
  std::string channel;
  stats::Summary hc;
  stats::Summary bp;
  double p_value{1.0};
  std::string test;  // "welch" or "wilcoxon"; "insufficient" when a cohort lacks two values
  bool marker{false};
};

struct CohortTable {
  std::vector<CohortCell> cells;
};

// Subjects are the statistical unit. Throws CohortTooSmall when a cohort
// has fewer than two subjects, InvalidArgument for subjects without a cohort.
CohortTable cohort_table(const SubjectAggregates& subjects, const CohortMap& cohorts,
                         const CellSet& wilcoxon_cells = {});

// characteristic,channel,hc,bp,p_value,test,marker with "mean (sd)" cells.
std::string format_cohort_table(const CohortTable& t);

}  // namespace sleeptk::characteristics
