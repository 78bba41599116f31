#pragma once

#include <span>
#include <string>
#include <vector>

#include "odcal/tables.hpp"

namespace odcal {

/// Cell-wise error metrics of a simulated table against the truth (e = sim - truth).
struct MetricsReport {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape_pct = 0.0;  // over cells with nonzero truth only; NaN when there are none
  double sde = 0.0;       // population standard deviation of e
  double p95_ae = 0.0;    // linear-interpolated 95th percentile of |e|
  double max_ae = 0.0;
  double mbe = 0.0;
  double r2 = 0.0;        // NaN when degenerate_truth
  bool degenerate_truth = false;
  int cells = 0;
  int mape_cells = 0;
};

MetricsReport compute_metrics(const CountTable& simulated, const CountTable& truth);
/// Same metrics on flat vectors of equal length.
MetricsReport compute_metrics(std::span<const double> simulated, std::span<const double> truth);

enum class StatTest { ShapiroWilk, PairedT, Wilcoxon };
enum class TestFlag { None, AllIdentical, ZeroVariance, AllZeroDifferences };

std::string to_string(StatTest test);
std::string to_string(TestFlag flag);

struct TestOutcome {
  StatTest test = StatTest::ShapiroWilk;
  double statistic = 0.0;
  double p_value = 1.0;
  int n = 0;
  TestFlag flag = TestFlag::None;
  /// Pipeline only: p-value of the normality check that chose the branch.
  double normality_p = 1.0;
};

/// Royston's approximation of the Shapiro-Wilk W test; 3 <= n <= 5000.
/// Identical values yield AllIdentical with p = 0 (treated as non-normal).
TestOutcome shapiro_wilk(std::span<const double> x);

/// Two-sided paired t test on d = x - y.
TestOutcome paired_t(std::span<const double> x, std::span<const double> y);

/// Two-sided Wilcoxon signed-rank test on d = x - y with zero differences
/// dropped and tied |d| given average ranks. Exact null distribution for
/// n <= 20, tie-corrected normal approximation above.
TestOutcome wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

/// For each detector column: Shapiro-Wilk on the per-interval differences,
/// then paired t when normal at `alpha`, Wilcoxon otherwise.
std::vector<TestOutcome> significance_pipeline(const CountTable& method, const CountTable& truth, double alpha);

/// Standard normal quantile.
double normal_quantile(double p);
double normal_cdf(double z);
/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
double student_t_two_sided(double t, double dof);

}  // namespace odcal
