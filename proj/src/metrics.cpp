#include "sleeptk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "sleeptk/error.hpp"

namespace sleeptk::metrics {

StageConfusion stage_confusion(const Hypnogram& a, const Hypnogram& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::LengthMismatch, "hypnograms differ in length: " + std::to_string(a.size()) +
                                               " vs " + std::to_string(b.size()));
  }
  if (a.size() == 0) throw Error(ErrorKind::EmptyHypnogram, "hypnograms are empty");
  StageConfusion c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto sa = static_cast<std::size_t>(a.stages[i]);
    const auto sb = static_cast<std::size_t>(b.stages[i]);
    if (sa == sb) {
      ++c.per_stage[sa].tp;
    } else {
      ++c.per_stage[sa].fp;
      ++c.per_stage[sb].fn;
    }
  }
  return c;
}

double stage_f1(const StageCounts& c) {
  if (c.tp == 0) return 0.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

double macro_f1(const Hypnogram& a, const Hypnogram& b, AbsentStagePolicy policy) {
  const auto c = stage_confusion(a, b);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : c.per_stage) {
    if (s.tp + s.fp + s.fn == 0) {
      if (policy == AbsentStagePolicy::Exclude) continue;
      sum += policy == AbsentStagePolicy::ScoreOne ? 1.0 : 0.0;
    } else {
      sum += stage_f1(s);
    }
    ++n;
  }
  return sum / static_cast<double>(n);
}

double interval_iou(const Event& a, const Event& b) {
  const double overlap = std::min(a.end_s(), b.end_s()) - std::max(a.start_s, b.start_s);
  if (overlap <= 0.0) return 0.0;
  return overlap / (std::max(a.end_s(), b.end_s()) - std::min(a.start_s, b.start_s));
}

EventMatchResult match_events(const EventList& a, const EventList& b, double threshold) {
  // b indices ordered by start, so overlapping candidates for one a-event
  // form a contiguous range bounded by the longest b-event.
  std::vector<std::size_t> order(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return b[x].start_s < b[y].start_s; });
  double longest = 0.0;
  for (const auto& e : b) longest = std::max(longest, e.duration_s);

  std::vector<MatchedPair> candidates;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double from = a[i].start_s - longest;
    auto it = std::lower_bound(order.begin(), order.end(), from,
                               [&](std::size_t j, double t) { return b[j].start_s < t; });
    for (; it != order.end() && b[*it].start_s < a[i].end_s(); ++it) {
      const double iou = interval_iou(a[i], b[*it]);
      if (iou > threshold) candidates.push_back({i, *it, iou});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const MatchedPair& x, const MatchedPair& y) {
    return std::tie(y.iou, x.index_a, x.index_b) < std::tie(x.iou, y.index_a, y.index_b);
  });

  EventMatchResult r;
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  for (const auto& c : candidates) {
    if (used_a[c.index_a] || used_b[c.index_b]) continue;
    used_a[c.index_a] = used_b[c.index_b] = true;
    r.pairs.push_back(c);
  }
  std::sort(r.pairs.begin(), r.pairs.end(),
            [](const MatchedPair& x, const MatchedPair& y) { return x.index_a < y.index_a; });
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!used_a[i]) r.unmatched_a.push_back(i);
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (!used_b[j]) r.unmatched_b.push_back(j);
  }
  return r;
}

IouF1Report iou_f1_report(std::span<const EventListPair> recordings, double threshold,
                          EmptyAgreement empty) {
  if (recordings.empty()) throw Error(ErrorKind::NoRecordings, "iou_f1 needs at least one recording");
  IouF1Report r;
  for (const auto& [a, b] : recordings) {
    const auto m = match_events(a, b, threshold);
    r.tp += m.tp();
    r.fp += m.fp();
    r.fn += m.fn();
  }
  const std::size_t denom = 2 * r.tp + r.fp + r.fn;
  if (denom == 0) {
    r.iou_f1 = empty == EmptyAgreement::Vacuous ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  } else {
    r.iou_f1 = 2.0 * static_cast<double>(r.tp) / static_cast<double>(denom);
  }
  return r;
}

double iou_f1(std::span<const EventListPair> recordings, double threshold) {
  return iou_f1_report(recordings, threshold).iou_f1;
}

double iou_f1(const EventList& a, const EventList& b, double threshold) {
  const EventListPair one{a, b};
  return iou_f1(std::span<const EventListPair>(&one, 1), threshold);
}

namespace {

template <typename Annotation>
void require_raters(const std::map<std::string, std::map<std::string, Annotation>>& raters) {
  if (raters.size() < 2) {
    throw Error(ErrorKind::InsufficientRaters,
                "agreement distribution needs at least two raters, got " + std::to_string(raters.size()));
  }
}

template <typename Annotation>
std::vector<std::string> joint_items(const std::map<std::string, Annotation>& x,
                                     const std::map<std::string, Annotation>& y) {
  std::vector<std::string> items;
  for (const auto& [item, _] : x) {
    if (y.contains(item)) items.push_back(item);
  }
  return items;
}

}  // namespace

std::vector<PairScore> pairwise_agreement_distribution(const RaterHypnograms& raters,
                                                       std::size_t min_joint_items,
                                                       AbsentStagePolicy policy) {
  require_raters(raters);
  std::vector<PairScore> out;
  for (auto i = raters.begin(); i != raters.end(); ++i) {
    for (auto j = std::next(i); j != raters.end(); ++j) {
      const auto items = joint_items(i->second, j->second);
      if (items.size() < min_joint_items) continue;
      for (const auto& item : items) {
        out.push_back({i->first, j->first, item, items.size(),
                       macro_f1(i->second.at(item), j->second.at(item), policy)});
      }
    }
  }
  return out;
}

std::vector<PairScore> pairwise_agreement_distribution(const RaterEvents& raters,
                                                       std::size_t min_joint_items, double threshold) {
  require_raters(raters);
  std::vector<PairScore> out;
  for (auto i = raters.begin(); i != raters.end(); ++i) {
    for (auto j = std::next(i); j != raters.end(); ++j) {
      const auto items = joint_items(i->second, j->second);
      if (items.size() < min_joint_items) continue;
      std::vector<EventListPair> recs;
      for (const auto& item : items) recs.emplace_back(i->second.at(item), j->second.at(item));
      out.push_back({i->first, j->first, "", items.size(), iou_f1(recs, threshold)});
    }
  }
  return out;
}

stats::Summary summarize_distribution(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorKind::EmptyScores, "no agreement scores to summarize");
  return stats::summarize(scores);
}

std::string format_pair_scores(const std::vector<PairScore>& scores) {
  std::string out = "pair,item,n_items,score\n";
  for (const auto& s : scores) {
    out += s.rater_a + "|" + s.rater_b + "," + s.item + "," + std::to_string(s.n_items) + "," +
           format_double(s.score) + "\n";
  }
  return out;
}

}  // namespace sleeptk::metrics
