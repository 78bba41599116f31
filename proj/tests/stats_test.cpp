#include <cmath>
#include <vector>

#include <doctest.h>

#include "odcal/rng.hpp"
#include "odcal/stats.hpp"
#include "oracles.hpp"

using namespace odcal;

namespace {

/// Differences d against a zero partner sample.
TestOutcome wilcoxon_of(const std::vector<double>& d) { return wilcoxon_signed_rank(d, std::vector<double>(d.size(), 0.0)); }

}  // namespace

TEST_SUITE("stats") {
  // Reference values were computed once with scipy.stats (shapiro, ttest_rel,
  // wilcoxon) and frozen here.
  TEST_CASE("Shapiro-Wilk against frozen reference values") {
    struct Case {
      std::vector<double> x;
      double w, p;
    };
    const std::vector<Case> cases{
        {{1.0, 2.0, 4.0}, 0.9642857142857142, 0.6368868450289689},
        {{2.1, -0.3, 1.7, 0.4, 3.3}, 0.9733503278024416, 0.8962890711823241},
        {{1, 2, 3, 4, 5, 6}, 0.9818894288744925, 0.9605549608523386},
        {{0.35, -1.2, 2.4, 0.8, -0.15, 1.9, 0.05, -0.7, 3.1, 0.6}, 0.9576305832406142, 0.7585545192871979},
        {{0, 0, 1, 0, 2, 0, 7, 0, 1, 0, 0, 15}, 0.5668502823126393, 5.7534829862090485e-05},
        {{-0.801931, -1.324359, -0.248362, 0.420445, 1.136047, 0.109706, -0.552647, -0.78478, 0.748746, 1.634783,
          0.272769, -1.233329, -0.958265, 1.600019, 0.202882, -1.732135, -0.083696, -1.163226, -0.629288, -0.488006,
          -0.713313, 0.553378, -0.063086, -0.589431, 0.409638, 0.829855, -1.643023, -0.25673, -0.980747, -0.173155,
          -1.289419, 0.02069, -0.037886, -0.304338, -1.047927, -0.39619, -1.091329, -1.355209, 0.224786, -1.10935},
         0.9697561027981524, 0.3535587574631094},
    };
    for (const Case& c : cases) {
      const TestOutcome t = shapiro_wilk(c.x);
      CHECK(t.statistic == doctest::Approx(c.w).epsilon(1e-7));
      CHECK(t.p_value == doctest::Approx(c.p).epsilon(1e-5));
      CHECK(t.flag == TestFlag::None);
    }
  }

  TEST_CASE("Shapiro-Wilk on identical values") {
    const TestOutcome t = shapiro_wilk(std::vector<double>(5, 2.0));
    CHECK(t.flag == TestFlag::AllIdentical);
    CHECK(t.p_value == 0.0);
    CHECK_THROWS_AS(shapiro_wilk(std::vector<double>{1.0, 2.0}), std::invalid_argument);
  }

  TEST_CASE("paired t against numeric integration and the frozen reference") {
    const std::vector<double> d{1, 2, 3, 4, 5, 6};
    const TestOutcome t = paired_t(d, std::vector<double>(6, 0.0));
    CHECK(t.statistic == doctest::Approx(4.582575694955841).epsilon(1e-12));
    CHECK(t.p_value == doctest::Approx(0.00593354451759226).epsilon(1e-8));
    CHECK(std::abs(t.p_value - oracle::t_two_sided_integrated(t.statistic, 5.0)) < 1e-9);

    const TestOutcome u = paired_t(std::vector<double>{3.1, 2.0, 5.5, 4.4, 1.0}, std::vector<double>{2.0, 2.5, 3.9, 4.0, 1.2});
    CHECK(u.statistic == doctest::Approx(1.2255430108515968).epsilon(1e-12));
    CHECK(u.p_value == doctest::Approx(0.28759424253022986).epsilon(1e-8));
  }

  TEST_CASE("Student t tail against numeric integration") {
    for (double dof : {1.0, 2.0, 3.0, 7.5, 30.0}) {
      for (double t : {0.1, 0.9, 2.0, 4.5}) {
        CHECK(std::abs(student_t_two_sided(t, dof) - oracle::t_two_sided_integrated(t, dof)) < 1e-9);
      }
    }
  }

  TEST_CASE("paired t degenerate variance") {
    const TestOutcome zero = paired_t(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3});
    CHECK(zero.flag == TestFlag::ZeroVariance);
    CHECK(zero.p_value == 1.0);
    const TestOutcome shift = paired_t(std::vector<double>{2, 3, 4}, std::vector<double>{1, 2, 3});
    CHECK(shift.flag == TestFlag::ZeroVariance);
    CHECK(shift.p_value == 0.0);
  }

  TEST_CASE("Wilcoxon exact p-values equal full enumeration") {
    Rng rng(42);
    for (int n = 1; n <= 12; ++n) {
      for (int trial = 0; trial < 6; ++trial) {
        std::vector<double> d(static_cast<std::size_t>(n));
        // Small integers give ties and zeros.
        for (double& v : d) v = static_cast<double>(static_cast<int>(rng() % 9) - 4);
        double w_ref = 0.0;
        const double p_ref = oracle::wilcoxon_enumerated_p(d, &w_ref);
        const TestOutcome t = wilcoxon_of(d);
        if (t.flag == TestFlag::AllZeroDifferences) {
          CHECK(t.p_value == 1.0);
          continue;
        }
        CHECK(t.statistic == w_ref);
        CHECK(std::abs(t.p_value - p_ref) < 1e-12);
      }
    }
  }

  TEST_CASE("Wilcoxon small cases") {
    const TestOutcome a = wilcoxon_of({1.0, -1.0});
    CHECK(a.statistic == 1.5);
    CHECK(a.p_value == 1.0);
    const TestOutcome b = wilcoxon_of({1, 2, 3, 4, 5});
    CHECK(b.statistic == 0.0);
    CHECK(b.p_value == doctest::Approx(2.0 / 32.0));
    const TestOutcome z = wilcoxon_of({0, 0, 0});
    CHECK(z.flag == TestFlag::AllZeroDifferences);
    CHECK(z.p_value == 1.0);
  }

  TEST_CASE("Wilcoxon normal approximation against the frozen reference") {
    const std::vector<double> d{1.4703, 1.0166, -1.6978, 0.5721, -0.8017, 0.3331, 0.3436, -1.6884, 0.0666, 0.0442,
                                1.262, -0.8814, 1.038, -0.799, -0.0313, -0.5405, 1.7487, 0.8682, 2.7317, 0.9419,
                                1.145, 1.1407, -0.3066, 0.23, 1.6504, -0.0966, 0.4888, 0.2788, 0.9092, -0.0649};
    const TestOutcome t = wilcoxon_of(d);
    CHECK(t.statistic == 130.0);
    CHECK(t.p_value == doctest::Approx(0.03500895681985013).epsilon(1e-9));
  }

  TEST_CASE("metric identities") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> sim(30), truth(30);
      for (std::size_t i = 0; i < sim.size(); ++i) {
        truth[i] = static_cast<double>(rng() % 20);
        sim[i] = truth[i] + static_cast<double>(static_cast<int>(rng() % 9) - 3);
      }
      const MetricsReport m = compute_metrics(sim, truth);
      CHECK(std::abs(m.sde * m.sde + m.mbe * m.mbe - m.mse) < 1e-9);
      CHECK(m.rmse == doctest::Approx(std::sqrt(m.mse)));
      CHECK(m.mae <= m.rmse + 1e-12);
      CHECK(m.p95_ae <= m.max_ae);
      CHECK(m.r2 <= 1.0);
    }
  }

  TEST_CASE("metrics on a hand example") {
    const std::vector<double> truth{2, 4, 0, 6};
    const std::vector<double> sim{3, 2, 1, 6};  // e = 1, -2, 1, 0
    const MetricsReport m = compute_metrics(sim, truth);
    CHECK(m.mse == doctest::Approx(1.5));
    CHECK(m.mae == doctest::Approx(1.0));
    CHECK(m.mbe == doctest::Approx(0.0));
    CHECK(m.max_ae == 2.0);
    CHECK(m.mape_cells == 3);
    CHECK(m.mape_pct == doctest::Approx(100.0 * (0.5 + 0.5 + 0.0) / 3.0));
    CHECK(m.r2 == doctest::Approx(1.0 - 6.0 / 20.0));
    // |e| sorted 0,1,1,2: the 95th percentile lies between the top two.
    CHECK(m.p95_ae == doctest::Approx(1.0 + 0.85 * 1.0));
  }

  TEST_CASE("constant truth is flagged as degenerate") {
    const MetricsReport m = compute_metrics(std::vector<double>{1, 2}, std::vector<double>{0, 0});
    CHECK(m.degenerate_truth);
    CHECK(std::isnan(m.r2));
    CHECK(std::isnan(m.mape_pct));
  }

  TEST_CASE("significance pipeline branches") {
    CountTable truth(6, 2), sim(6, 2);
    const int t0[] = {10, 12, 9, 14, 11, 13};
    const int s0[] = {11, 12, 10, 13, 12, 15};  // d = 1,0,1,-1,1,2
    for (int k = 0; k < 6; ++k) {
      truth.at(k, 0) = t0[k];
      sim.at(k, 0) = s0[k];
      truth.at(k, 1) = 3;
      sim.at(k, 1) = 3;
    }
    const std::vector<TestOutcome> out = significance_pipeline(sim, truth, 0.05);
    REQUIRE(out.size() == 2);
    const std::vector<double> d{1, 0, 1, -1, 1, 2};
    const TestOutcome sw = shapiro_wilk(d);
    CHECK(out[0].normality_p == doctest::Approx(sw.p_value));
    CHECK(out[0].test == (sw.p_value >= 0.05 ? StatTest::PairedT : StatTest::Wilcoxon));
    CHECK(out[1].test == StatTest::Wilcoxon);  // identical columns are not normal
    CHECK(out[1].p_value == 1.0);
  }

  TEST_CASE("normal helpers") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_cdf(normal_quantile(0.2)) == doctest::Approx(0.2).epsilon(1e-12));
  }
}
