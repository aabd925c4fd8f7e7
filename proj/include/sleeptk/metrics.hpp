#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sleeptk/record_io.hpp"
#include "sleeptk/stats.hpp"

namespace sleeptk::metrics {

// ---- Macro F1 between hypnograms -------------------------------------------

struct StageCounts {
  std::size_t tp{0};
  std::size_t fp{0};
  std::size_t fn{0};
};

// Per-stage counts of `a` against reference `b`; tp + fn equals the number
// of occurrences of the stage in `b`.
struct StageConfusion {
  std::array<StageCounts, kNumStages> per_stage{};
};

// Treatment of stages that occur in neither annotation.
enum class AbsentStagePolicy { Exclude, ScoreOne, ScoreZero };

// Throws LengthMismatch, EmptyHypnogram.
StageConfusion stage_confusion(const Hypnogram& a, const Hypnogram& b);
double stage_f1(const StageCounts& c);
double macro_f1(const Hypnogram& a, const Hypnogram& b,
                AbsentStagePolicy policy = AbsentStagePolicy::Exclude);

// ---- Event matching --------------------------------------------------------

inline constexpr double kDefaultIouThreshold = 0.2;

// overlap / (max end - min start); 0 for disjoint or touching intervals.
double interval_iou(const Event& a, const Event& b);

struct MatchedPair {
  std::size_t index_a{0};
  std::size_t index_b{0};
  double iou{0.0};
};

struct EventMatchResult {
  std::vector<MatchedPair> pairs;
  std::vector<std::size_t> unmatched_a;  // false positives when b is the reference
  std::vector<std::size_t> unmatched_b;  // false negatives

  std::size_t tp() const { return pairs.size(); }
  std::size_t fp() const { return unmatched_a.size(); }
  std::size_t fn() const { return unmatched_b.size(); }
};

// Greedy one-to-one matching: candidate pairs are taken in order of
// decreasing IoU (ties by index_a, then index_b) and accepted when both
// events are still free and IoU > threshold.
EventMatchResult match_events(const EventList& a, const EventList& b,
                              double threshold = kDefaultIouThreshold);

// What a pooled comparison with no events on either side scores.
enum class EmptyAgreement { Vacuous, Undefined };

struct IouF1Report {
  std::size_t tp{0};
  std::size_t fp{0};
  std::size_t fn{0};
  double iou_f1{0.0};  // NaN when undefined under EmptyAgreement::Undefined
};

using EventListPair = std::pair<EventList, EventList>;

// Counts are pooled over recordings before 2TP / (2TP + FP + FN).
// Throws NoRecordings.
IouF1Report iou_f1_report(std::span<const EventListPair> recordings,
                          double threshold = kDefaultIouThreshold,
                          EmptyAgreement empty = EmptyAgreement::Vacuous);
double iou_f1(std::span<const EventListPair> recordings, double threshold = kDefaultIouThreshold);
double iou_f1(const EventList& a, const EventList& b, double threshold = kDefaultIouThreshold);

// ---- Inter-rater distributions ---------------------------------------------

// rater -> item (subject or block id) -> annotation
using RaterHypnograms = std::map<std::string, std::map<std::string, Hypnogram>>;
using RaterEvents = std::map<std::string, std::map<std::string, EventList>>;

inline constexpr std::size_t kDefaultMinJointItems = 5;

struct PairScore {
  std::string rater_a;
  std::string rater_b;
  std::string item;  // empty for pooled scores
  std::size_t n_items{0};
  double score{0.0};
};

// One score per joint item (Macro F1) for every rater pair with at least
// min_joint_items jointly annotated items. Throws InsufficientRaters.
std::vector<PairScore> pairwise_agreement_distribution(
    const RaterHypnograms& raters, std::size_t min_joint_items = kDefaultMinJointItems,
    AbsentStagePolicy policy = AbsentStagePolicy::Exclude);

// One pooled IoU-F1 per qualifying rater pair.
std::vector<PairScore> pairwise_agreement_distribution(
    const RaterEvents& raters, std::size_t min_joint_items = kDefaultMinJointItems,
    double threshold = kDefaultIouThreshold);

// Mean, sample SD and linear-interpolation quartiles. Throws EmptyScores.
stats::Summary summarize_distribution(std::span<const double> scores);

std::string format_pair_scores(const std::vector<PairScore>& scores);

}  // namespace sleeptk::metrics
