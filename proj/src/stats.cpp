#include "sleeptk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "sleeptk/dsp.hpp"
#include "sleeptk/error.hpp"

namespace sleeptk::stats {

namespace {

constexpr double kTolerance = 1e-12;
constexpr double kTiny = 1e-300;
constexpr int kMaxIterations = 10000;

double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kTolerance) break;
  }
  return h;
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x, double mean) {
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size() - 1);
}

double tail_p(double cdf_low, double cdf_high, Sidedness sidedness) {
  switch (sidedness) {
    case Sidedness::Greater:
      return cdf_high;
    case Sidedness::Less:
      return cdf_low;
    case Sidedness::TwoSided:
      break;
  }
  return std::min(1.0, 2.0 * std::min(cdf_low, cdf_high));
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || x < 0.0 || x > 1.0) {
    throw Error(ErrorKind::InvalidArgument, "incomplete_beta: arguments out of domain");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorKind::InvalidArgument, "student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

TestResult welch_t_test(std::span<const double> a, std::span<const double> b, Sidedness sidedness,
                        VarianceModel variance) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorKind::SampleTooSmall, "t-test needs at least two values per sample");
  }
  TestResult r;
  r.test = variance == VarianceModel::Welch ? "welch" : "student";
  r.sidedness = sidedness;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double va = variance_of(a, ma);
  const double vb = variance_of(b, mb);

  double se2 = 0.0;
  double df = 0.0;
  if (variance == VarianceModel::Welch) {
    se2 = va / na + vb / nb;
    const double num = se2 * se2;
    const double den = (va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0);
    df = den > 0.0 ? num / den : na + nb - 2.0;
  } else {
    df = na + nb - 2.0;
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    se2 = pooled * (1.0 / na + 1.0 / nb);
  }
  r.df = df;

  if (se2 == 0.0) {
    r.degenerate = true;
    if (ma == mb) {
      r.statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.statistic = ma > mb ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
      const bool a_high = ma > mb;
      r.p_value = sidedness == Sidedness::TwoSided ? 0.0
                  : (sidedness == Sidedness::Greater) == a_high ? 0.0
                                                                 : 1.0;
    }
    return r;
  }

  r.statistic = (ma - mb) / std::sqrt(se2);
  const double low = student_t_cdf(r.statistic, df);
  const double high = student_t_cdf(-r.statistic, df);
  r.p_value = std::clamp(tail_p(low, high, sidedness), 0.0, 1.0);
  return r;
}

TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                             Sidedness sidedness) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::EmptySample, "rank-sum test needs non-empty samples");
  const std::size_t na = a.size();
  const std::size_t n = na + b.size();

  std::vector<std::pair<double, bool>> pooled;  // (value, from a)
  pooled.reserve(n);
  for (double v : a) pooled.emplace_back(v, true);
  for (double v : b) pooled.emplace_back(v, false);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  double w = 0.0;
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    const double t = static_cast<double>(j - i);
    if (j - i > 1) ties = true;
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second) w += midrank;
    }
    i = j;
  }

  TestResult r;
  r.test = "wilcoxon";
  r.statistic = w;
  r.sidedness = sidedness;

  if (n <= kExactLimit && !ties) {
    // counts[k][s]: subsets of size k from ranks 1..m with rank sum s.
    const std::size_t max_sum = n * (n + 1) / 2;
    std::vector<std::vector<double>> counts(na + 1, std::vector<double>(max_sum + 1, 0.0));
    counts[0][0] = 1.0;
    for (std::size_t rank = 1; rank <= n; ++rank) {
      for (std::size_t k = std::min(rank, na); k >= 1; --k) {
        for (std::size_t s = max_sum; s >= rank; --s) counts[k][s] += counts[k - 1][s - rank];
      }
    }
    const auto& dist = counts[na];
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    const auto ws = static_cast<std::size_t>(std::llround(w));
    double le = 0.0;
    double ge = 0.0;
    for (std::size_t s = 0; s <= max_sum; ++s) {
      if (s <= ws) le += dist[s];
      if (s >= ws) ge += dist[s];
    }
    r.exact = true;
    r.p_value = std::clamp(tail_p(le / total, ge / total, sidedness), 0.0, 1.0);
    return r;
  }

  const double nad = static_cast<double>(na);
  const double nbd = static_cast<double>(b.size());
  const double nd = static_cast<double>(n);
  const double mu = nad * (nd + 1.0) / 2.0;
  const double var = nad * nbd / 12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  if (!(var > 0.0)) {
    r.degenerate = true;
    r.p_value = 1.0;
    return r;
  }
  const double sd = std::sqrt(var);
  const double d = w - mu;
  double p = 1.0;
  switch (sidedness) {
    case Sidedness::TwoSided: {
      const double z = std::max(0.0, std::abs(d) - 0.5) / sd;
      p = std::min(1.0, 2.0 * normal_cdf(-z));
      break;
    }
    case Sidedness::Greater:
      p = normal_cdf(-(d - 0.5) / sd);
      break;
    case Sidedness::Less:
      p = normal_cdf((d + 0.5) / sd);
      break;
  }
  r.p_value = std::clamp(p, 0.0, 1.0);
  return r;
}

Summary summarize(std::span<const double> sample) {
  if (sample.empty()) throw Error(ErrorKind::EmptySample, "summarize: empty sample");
  Summary s;
  s.n = sample.size();
  s.mean = mean_of(sample);
  if (s.n == 1) {
    s.degenerate = true;
  } else {
    s.sd = std::sqrt(variance_of(sample, s.mean));
  }
  s.q1 = dsp::quantile(sample, 0.25);
  s.median = dsp::quantile(sample, 0.5);
  s.q3 = dsp::quantile(sample, 0.75);
  return s;
}

}  // namespace sleeptk::stats
