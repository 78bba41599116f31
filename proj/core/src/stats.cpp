#include "odcal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace odcal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> column(const CountTable& t, int c) {
  std::vector<double> out(static_cast<std::size_t>(t.rows()));
  for (int r = 0; r < t.rows(); ++r) out[static_cast<std::size_t>(r)] = t.at(r, c);
  return out;
}

std::vector<double> as_doubles(const CountTable& t) {
  return {t.values().begin(), t.values().end()};
}

double poly(std::span<const double> c, double x) {
  double r = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double student_t_two_sided(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t_distribution<double> dist(dof);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

MetricsReport compute_metrics(std::span<const double> simulated, std::span<const double> truth) {
  if (simulated.size() != truth.size()) throw std::invalid_argument("metric inputs differ in length");
  if (truth.empty()) throw std::invalid_argument("metrics need at least one cell");
  const auto n = static_cast<double>(truth.size());
  MetricsReport m;
  m.cells = static_cast<int>(truth.size());
  std::vector<double> abs_err(truth.size());
  double sq = 0.0, abs_sum = 0.0, bias = 0.0, pct = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = simulated[i] - truth[i];
    sq += e * e;
    abs_sum += std::abs(e);
    bias += e;
    abs_err[i] = std::abs(e);
    if (truth[i] != 0.0) {
      pct += std::abs(e) / std::abs(truth[i]);
      ++m.mape_cells;
    }
  }
  m.mse = sq / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = abs_sum / n;
  m.mbe = bias / n;
  m.mape_pct = m.mape_cells > 0 ? 100.0 * pct / m.mape_cells : kNaN;
  double dev = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double c = simulated[i] - truth[i] - m.mbe;
    dev += c * c;
  }
  m.sde = std::sqrt(dev / n);
  std::sort(abs_err.begin(), abs_err.end());
  m.max_ae = abs_err.back();
  const double h = 0.95 * (n - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, abs_err.size() - 1);
  m.p95_ae = abs_err[lo] + (h - static_cast<double>(lo)) * (abs_err[hi] - abs_err[lo]);

  const double mean_truth = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double ss_tot = 0.0;
  for (double t : truth) ss_tot += (t - mean_truth) * (t - mean_truth);
  if (ss_tot == 0.0) {
    m.degenerate_truth = true;
    m.r2 = kNaN;
  } else {
    m.r2 = 1.0 - sq / ss_tot;
  }
  return m;
}

MetricsReport compute_metrics(const CountTable& simulated, const CountTable& truth) {
  if (simulated.rows() != truth.rows() || simulated.cols() != truth.cols()) {
    throw std::invalid_argument("metric tables differ in shape");
  }
  const std::vector<double> s = as_doubles(simulated);
  const std::vector<double> t = as_doubles(truth);
  return compute_metrics(s, t);
}

std::string to_string(StatTest test) {
  switch (test) {
    case StatTest::ShapiroWilk: return "shapiro-wilk";
    case StatTest::PairedT: return "paired-t";
    case StatTest::Wilcoxon: return "wilcoxon";
  }
  return "?";
}

std::string to_string(TestFlag flag) {
  switch (flag) {
    case TestFlag::None: return "none";
    case TestFlag::AllIdentical: return "all-identical";
    case TestFlag::ZeroVariance: return "zero-variance";
    case TestFlag::AllZeroDifferences: return "all-zero-differences";
  }
  return "?";
}

TestOutcome shapiro_wilk(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  if (n < 3 || n > 5000) throw std::invalid_argument("shapiro_wilk needs 3 <= n <= 5000");
  TestOutcome out;
  out.test = StatTest::ShapiroWilk;
  out.n = n;
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  if (s.front() == s.back()) {
    out.flag = TestFlag::AllIdentical;
    out.statistic = kNaN;
    out.p_value = 0.0;
    return out;
  }

  std::vector<double> a(static_cast<std::size_t>(n), 0.0);
  if (n == 3) {
    a[0] = -std::sqrt(0.5);
    a[2] = std::sqrt(0.5);
  } else {
    static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    std::vector<double> m(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = normal_quantile((i + 1 - 0.375) / (n + 0.25));
    double summ2 = 0.0;
    for (double v : m) summ2 += v * v;
    const double ssumm2 = std::sqrt(summ2);
    const double u = 1.0 / std::sqrt(static_cast<double>(n));
    const auto last = static_cast<std::size_t>(n - 1);
    const double an = m[last] / ssumm2 + poly(c1, u);
    std::size_t tails = 1;
    double fac = 0.0;
    if (n > 5) {
      const double an1 = m[last - 1] / ssumm2 + poly(c2, u);
      fac = std::sqrt((summ2 - 2.0 * m[last] * m[last] - 2.0 * m[last - 1] * m[last - 1]) /
                      (1.0 - 2.0 * an * an - 2.0 * an1 * an1));
      a[last - 1] = an1;
      a[1] = -an1;
      tails = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[last] * m[last]) / (1.0 - 2.0 * an * an));
    }
    a[last] = an;
    a[0] = -an;
    for (std::size_t i = tails; i + tails < static_cast<std::size_t>(n); ++i) a[i] = m[i] / fac;
  }

  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += a[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
    den += (s[static_cast<std::size_t>(i)] - mean) * (s[static_cast<std::size_t>(i)] - mean);
  }
  const double w = std::min(1.0, num * num / den);
  out.statistic = w;

  if (n == 3) {
    out.p_value = std::max(0.0, 6.0 / std::numbers::pi * (std::asin(std::sqrt(w)) - std::numbers::pi / 3.0));
    return out;
  }
  const double w1 = std::log1p(-w);
  const double dn = n;
  double y = w1, mu = 0.0, sigma = 1.0;
  if (n <= 11) {
    const double gamma = -2.273 + 0.459 * dn;
    if (w1 >= gamma) {
      out.p_value = 0.0;
      return out;
    }
    y = -std::log(gamma - w1);
    mu = 0.544 - 0.39978 * dn + 0.025054 * dn * dn - 6.714e-4 * dn * dn * dn;
    sigma = std::exp(1.3822 - 0.77857 * dn + 0.062767 * dn * dn - 0.0020322 * dn * dn * dn);
  } else {
    const double ln = std::log(dn);
    mu = -1.5861 - 0.31082 * ln - 0.083751 * ln * ln + 0.0038915 * ln * ln * ln;
    sigma = std::exp(-0.4803 - 0.082676 * ln + 0.0030302 * ln * ln);
  }
  out.p_value = std::clamp(1.0 - normal_cdf((y - mu) / sigma), 0.0, 1.0);
  return out;
}

TestOutcome paired_t(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("paired_t needs two equal samples, n >= 2");
  const auto n = static_cast<double>(x.size());
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  TestOutcome out;
  out.test = StatTest::PairedT;
  out.n = static_cast<int>(x.size());
  if (sd == 0.0) {
    out.flag = TestFlag::ZeroVariance;
    out.statistic = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    out.p_value = mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.statistic = mean / (sd / std::sqrt(n));
  out.p_value = student_t_two_sided(out.statistic, n - 1.0);
  return out;
}

TestOutcome wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("wilcoxon needs two equal samples");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  }
  TestOutcome out;
  out.test = StatTest::Wilcoxon;
  out.n = static_cast<int>(d.size());
  if (d.empty()) {
    out.flag = TestFlag::AllZeroDifferences;
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  // Doubled average ranks keep tied ranks integral.
  std::vector<long long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const auto r2 = static_cast<long long>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long long plus2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) plus2 += rank2[i];
  }
  const auto total2 = static_cast<long long>(n * (n + 1));
  const long long w2 = std::min(plus2, total2 - plus2);
  out.statistic = static_cast<double>(w2) / 2.0;

  if (n <= 20) {
    std::vector<double> count(static_cast<std::size_t>(total2 + 1), 0.0);
    count[0] = 1.0;
    long long reach = 0;
    for (long long r : rank2) {
      for (long long s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
      reach += r;
    }
    double extreme = 0.0;
    for (long long s = 0; s <= total2; ++s) {
      if (std::min(s, total2 - s) <= w2) extreme += count[static_cast<std::size_t>(s)];
    }
    out.p_value = std::min(1.0, extreme / std::ldexp(1.0, static_cast<int>(n)));
    return out;
  }
  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
  out.p_value = var > 0.0 ? std::min(1.0, 2.0 * normal_cdf((out.statistic - mean) / std::sqrt(var))) : 1.0;
  return out;
}

std::vector<TestOutcome> significance_pipeline(const CountTable& method, const CountTable& truth, double alpha) {
  if (method.rows() != truth.rows() || method.cols() != truth.cols()) {
    throw std::invalid_argument("significance tables differ in shape");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  std::vector<TestOutcome> out;
  for (int c = 0; c < truth.cols(); ++c) {
    const std::vector<double> x = column(method, c);
    const std::vector<double> y = column(truth, c);
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
    double normality_p = 0.0;
    bool normal = false;
    if (d.size() >= 3) {
      const TestOutcome sw = shapiro_wilk(d);
      normality_p = sw.p_value;
      normal = sw.flag == TestFlag::None && sw.p_value >= alpha;
    }
    TestOutcome t = normal ? paired_t(x, y) : wilcoxon_signed_rank(x, y);
    t.normality_p = normality_p;
    out.push_back(t);
  }
  return out;
}

}  // namespace odcal
