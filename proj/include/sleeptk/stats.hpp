#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace sleeptk::stats {

// Greater: alternative mean(a) > mean(b) (or a stochastically larger).
enum class Sidedness { TwoSided, Greater, Less };
enum class VarianceModel { Welch, Pooled };

struct TestResult {
  std::string test;  // "welch", "student" or "wilcoxon"
  double statistic{0.0};
  std::optional<double> df;
  double p_value{1.0};
  Sidedness sidedness{Sidedness::TwoSided};
  bool exact{false};
  // Set when the sampling distribution collapses (zero variance); p then
  // follows the documented convention rather than a distribution.
  bool degenerate{false};
};

// Two-sample t-test. Throws SampleTooSmall when either sample has fewer than
// two values.
TestResult welch_t_test(std::span<const double> a, std::span<const double> b,
                        Sidedness sidedness = Sidedness::TwoSided,
                        VarianceModel variance = VarianceModel::Welch);

// Rank-sum of `a` with midranks. Exact null distribution when
// |a| + |b| <= kExactLimit and there are no ties; otherwise normal
// approximation with tie and continuity corrections. Throws EmptySample.
inline constexpr std::size_t kExactLimit = 20;
TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                             Sidedness sidedness = Sidedness::TwoSided);

struct Summary {
  std::size_t n{0};
  double mean{0.0};
  double sd{0.0};  // sample SD (n - 1); 0 with degenerate set when n == 1
  double q1{0.0};
  double median{0.0};
  double q3{0.0};
  bool degenerate{false};
};

// Throws EmptySample.
Summary summarize(std::span<const double> sample);

// Regularized incomplete beta I_x(a, b) by continued fraction (modified
// Lentz, relative tolerance 1e-12 per term).
double incomplete_beta(double a, double b, double x);
// CDF of Student's t with `df` degrees of freedom (df > 0, may be fractional).
double student_t_cdf(double t, double df);
double normal_cdf(double z);

}  // namespace sleeptk::stats
