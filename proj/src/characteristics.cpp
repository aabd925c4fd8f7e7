#include "sleeptk/characteristics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sleeptk/dsp.hpp"
#include "sleeptk/error.hpp"
#include "text_util.hpp"

namespace sleeptk::characteristics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Filtered event segment with the pad already removed.
struct FilteredSegment {
  std::vector<double> padded;
  std::size_t core_begin{0};
  std::size_t core_end{0};
  double fs{0.0};
};

FilteredSegment filtered_segment(const SignalRecord& rec, const Event& event, std::string_view channel,
                                 const FeatureParams& p) {
  const Channel& ch = rec.channel(channel);
  const auto n = static_cast<long>(ch.samples.size());
  const long i0 = std::max(0L, static_cast<long>(std::llround(event.start_s * ch.fs)));
  const long i1 = std::min(n, static_cast<long>(std::llround(event.end_s() * ch.fs)));
  if (i1 <= i0) throw Error(ErrorKind::EmptySegment, "event covers no samples of " + std::string(channel));
  const auto pad = static_cast<long>(std::llround(p.pad_s * ch.fs));
  const long p0 = std::max(0L, i0 - pad);
  const long p1 = std::min(n, i1 + pad);
  const std::span<const double> raw(ch.samples.data() + p0, static_cast<std::size_t>(p1 - p0));
  FilteredSegment s;
  s.fs = ch.fs;
  s.padded = dsp::apply_filter(dsp::design_bandpass(p.filter_order, p.band_low_hz, p.band_high_hz, ch.fs), raw);
  s.core_begin = static_cast<std::size_t>(i0 - p0);
  s.core_end = static_cast<std::size_t>(i1 - p0);
  return s;
}

std::string fixed(double v, int decimals) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string mean_sd(const stats::Summary& s) {
  if (s.n == 0) return "n/a";
  return fixed(s.mean, 2) + " (" + fixed(s.sd, 2) + ")";
}

}  // namespace

double n2_minutes(const Hypnogram& hyp) {
  const auto n2 = std::count(hyp.stages.begin(), hyp.stages.end(), Stage::N2);
  return static_cast<double>(n2) * Hypnogram::kEpochLenS / 60.0;
}

double spindle_density(const EventList& events, const Hypnogram& hyp) {
  const double minutes = n2_minutes(hyp);
  if (minutes <= 0.0) throw Error(ErrorKind::NoN2Sleep, "hypnogram contains no N2 epochs");
  return static_cast<double>(events.size()) / minutes;
}

double spindle_frequency(const SignalRecord& rec, const Event& event, std::string_view channel,
                         const FeatureParams& params) {
  const auto seg = filtered_segment(rec, event, channel, params);
  std::vector<double> crossings;
  for (std::size_t i = seg.core_begin; i + 1 < seg.core_end; ++i) {
    const double a = seg.padded[i];
    const double b = seg.padded[i + 1];
    if ((a < 0.0) == (b < 0.0)) continue;
    const double frac = a == b ? 0.0 : a / (a - b);
    crossings.push_back((static_cast<double>(i) + frac) / seg.fs);
  }
  if (crossings.size() < 3) {
    throw Error(ErrorKind::TooFewCrossings,
                std::to_string(crossings.size()) + " zero crossings in event at " + format_double(event.start_s) + " s");
  }
  double acc = 0.0;
  for (std::size_t k = 1; k < crossings.size(); ++k) acc += 1.0 / (2.0 * (crossings[k] - crossings[k - 1]));
  return acc / static_cast<double>(crossings.size() - 1);
}

double spindle_amplitude(const SignalRecord& rec, const Event& event, std::string_view channel,
                         const FeatureParams& params) {
  const auto seg = filtered_segment(rec, event, channel, params);
  const auto z = dsp::analytic_signal(seg.padded);
  double acc = 0.0;
  for (std::size_t i = seg.core_begin; i < seg.core_end; ++i) {
    acc += params.amplitude == AmplitudeConvention::Envelope ? std::abs(z[i]) : std::abs(z[i].imag());
  }
  return acc / static_cast<double>(seg.core_end - seg.core_begin);
}

bool classify_fast_slow(double frequency_hz, double threshold_hz) { return frequency_hz > threshold_hz; }

FeatureSet compute_features(const SignalRecord& rec, const EventList& events, std::span<const std::string> channels,
                            const FeatureParams& params) {
  FeatureSet out;
  for (const auto& ch : channels) {
    rec.channel(ch);
    for (const auto& e : events) {
      if (std::find(e.channels.begin(), e.channels.end(), ch) == e.channels.end()) continue;
      try {
        SpindleFeatures f;
        f.channel = ch;
        f.start_s = e.start_s;
        f.duration_s = e.duration_s;
        f.frequency_hz = spindle_frequency(rec, e, ch, params);
        f.amplitude_uv = spindle_amplitude(rec, e, ch, params);
        f.is_fast = classify_fast_slow(f.frequency_hz, params.fast_threshold_hz);
        out.features.push_back(std::move(f));
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::TooFewCrossings) throw;
        ++out.skipped;
      }
    }
  }
  return out;
}

std::string format_features(const SubjectFeatures& s) {
  std::string out = "# n2_minutes=" + format_double(s.n2_minutes) + "\n# channels=";
  for (std::size_t i = 0; i < s.channels.size(); ++i) out += (i ? "|" : "") + s.channels[i];
  out += "\nchannel,start_s,duration_s,frequency_hz,amplitude_uv,is_fast\n";
  for (const auto& f : s.features) {
    out += f.channel + "," + format_double(f.start_s) + "," + format_double(f.duration_s) + "," +
           format_double(f.frequency_hz) + "," + format_double(f.amplitude_uv) + "," + (f.is_fast ? "1" : "0") + "\n";
  }
  return out;
}

SubjectFeatures parse_features(std::string_view text) {
  SubjectFeatures s;
  bool have_minutes = false;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(text)) {
    ++line_no;
    line = text::trim(line);
    if (line.empty() || line.starts_with("channel,")) continue;
    if (line.starts_with("#")) {
      const auto body = text::trim(line.substr(1));
      if (body.starts_with("n2_minutes=")) {
        const auto v = text::parse_double(body.substr(11));
        if (!v) throw Error(ErrorKind::UnparsableRow, "line " + std::to_string(line_no) + ": bad n2_minutes");
        s.n2_minutes = *v;
        have_minutes = true;
      } else if (body.starts_with("channels=")) {
        for (auto c : text::split(body.substr(9), '|')) {
          if (!text::trim(c).empty()) s.channels.emplace_back(text::trim(c));
        }
      }
      continue;
    }
    const auto f = text::split(line, ',');
    if (f.size() != 6) throw Error(ErrorKind::UnparsableRow, "line " + std::to_string(line_no) + ": expected 6 fields");
    SpindleFeatures sf;
    sf.channel = std::string(text::trim(f[0]));
    const auto start = text::parse_double(text::trim(f[1]));
    const auto dur = text::parse_double(text::trim(f[2]));
    const auto freq = text::parse_double(text::trim(f[3]));
    const auto amp = text::parse_double(text::trim(f[4]));
    const auto fast = text::trim(f[5]);
    if (!start || !dur || !freq || !amp || (fast != "0" && fast != "1")) {
      throw Error(ErrorKind::UnparsableRow, "line " + std::to_string(line_no) + ": malformed feature row");
    }
    sf.start_s = *start;
    sf.duration_s = *dur;
    sf.frequency_hz = *freq;
    sf.amplitude_uv = *amp;
    sf.is_fast = fast == "1";
    s.features.push_back(std::move(sf));
  }
  if (!have_minutes) throw Error(ErrorKind::MalformedHeader, "feature file lacks '# n2_minutes='");
  if (s.channels.empty()) {
    for (const auto& f : s.features) {
      if (std::find(s.channels.begin(), s.channels.end(), f.channel) == s.channels.end()) s.channels.push_back(f.channel);
    }
  }
  return s;
}

SubjectFeatures read_features(const std::filesystem::path& path) { return parse_features(read_file(path)); }

Speed parse_speed(std::string_view s) {
  const auto l = text::to_lower(s);
  if (l == "fast") return Speed::Fast;
  if (l == "slow") return Speed::Slow;
  if (l == "all") return Speed::All;
  throw Error(ErrorKind::InvalidArgument, "speed must be fast, slow or all");
}

double ChannelAggregate::value(std::string_view characteristic) const {
  if (characteristic == "Density") return density_spm;
  if (characteristic == "Duration") return duration_s;
  if (characteristic == "Frequency") return frequency_hz;
  if (characteristic == "Amplitude") return amplitude_uv;
  throw Error(ErrorKind::InvalidArgument, "unknown characteristic '" + std::string(characteristic) + "'");
}

std::vector<ChannelAggregate> aggregate_subject(const SubjectFeatures& s, Speed speed, double fast_threshold_hz) {
  if (!(s.n2_minutes > 0.0)) throw Error(ErrorKind::NoN2Sleep, "subject has no N2 sleep");
  std::vector<ChannelAggregate> out;
  for (const auto& ch : s.channels) {
    ChannelAggregate a;
    a.channel = ch;
    double dur = 0.0, freq = 0.0, amp = 0.0;
    for (const auto& f : s.features) {
      if (f.channel != ch) continue;
      const bool fast = classify_fast_slow(f.frequency_hz, fast_threshold_hz);
      if ((speed == Speed::Fast && !fast) || (speed == Speed::Slow && fast)) continue;
      ++a.count;
      dur += f.duration_s;
      freq += f.frequency_hz;
      amp += f.amplitude_uv;
    }
    a.density_spm = static_cast<double>(a.count) / s.n2_minutes;
    const double n = static_cast<double>(a.count);
    a.duration_s = a.count ? dur / n : kNaN;
    a.frequency_hz = a.count ? freq / n : kNaN;
    a.amplitude_uv = a.count ? amp / n : kNaN;
    out.push_back(std::move(a));
  }
  return out;
}

Cohort parse_cohort(std::string_view s) {
  const auto u = text::to_upper(text::trim(s));
  if (u == "HC") return Cohort::HC;
  if (u == "BP") return Cohort::BP;
  throw Error(ErrorKind::InvalidArgument, "cohort must be HC or BP, got '" + std::string(s) + "'");
}

std::string_view cohort_name(Cohort c) { return c == Cohort::HC ? "HC" : "BP"; }

CohortTable cohort_table(const SubjectAggregates& subjects, const CohortMap& cohorts, const CellSet& wilcoxon_cells) {
  std::size_t n_hc = 0, n_bp = 0;
  std::vector<std::string> channels;
  for (const auto& [subject, aggs] : subjects) {
    const auto it = cohorts.find(subject);
    if (it == cohorts.end()) throw Error(ErrorKind::InvalidArgument, "subject '" + subject + "' has no cohort");
    (it->second == Cohort::HC ? n_hc : n_bp)++;
    for (const auto& a : aggs) {
      if (std::find(channels.begin(), channels.end(), a.channel) == channels.end()) channels.push_back(a.channel);
    }
  }
  if (n_hc < 2 || n_bp < 2) {
    throw Error(ErrorKind::CohortTooSmall, "cohorts need at least two subjects each (HC " + std::to_string(n_hc) +
                                               ", BP " + std::to_string(n_bp) + ")");
  }

  CohortTable t;
  for (const auto characteristic : kCharacteristics) {
    for (const auto& ch : channels) {
      std::vector<double> hc, bp;
      for (const auto& [subject, aggs] : subjects) {
        for (const auto& a : aggs) {
          if (a.channel != ch) continue;
          const double v = a.value(characteristic);
          if (std::isnan(v)) continue;
          (cohorts.at(subject) == Cohort::HC ? hc : bp).push_back(v);
        }
      }
      CohortCell cell;
      cell.characteristic = std::string(characteristic);
      cell.channel = ch;
      if (!hc.empty()) cell.hc = stats::summarize(hc);
      if (!bp.empty()) cell.bp = stats::summarize(bp);
      const bool rank = wilcoxon_cells.contains({cell.characteristic, ch});
      if (hc.size() < 2 || bp.size() < 2) {
        cell.test = "insufficient";
        cell.p_value = kNaN;
      } else if (rank) {
        cell.test = "wilcoxon";
        cell.marker = true;
        cell.p_value = stats::wilcoxon_rank_sum(hc, bp).p_value;
      } else {
        cell.test = "welch";
        cell.p_value = stats::welch_t_test(hc, bp).p_value;
      }
      t.cells.push_back(std::move(cell));
    }
  }
  return t;
}

std::string format_cohort_table(const CohortTable& t) {
  std::string out = "characteristic,channel,hc,bp,p_value,test,marker\n";
  for (const auto& c : t.cells) {
    out += c.characteristic + "," + c.channel + "," + mean_sd(c.hc) + "," + mean_sd(c.bp) + "," +
           (std::isnan(c.p_value) ? std::string("nan") : fixed(c.p_value, 4)) + "," + c.test + "," +
           (c.marker ? "†" : "") + "\n";
  }
  return out;
}

}  // namespace sleeptk::characteristics
