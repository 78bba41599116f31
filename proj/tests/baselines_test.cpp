#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "odcal/baselines.hpp"
#include "odcal/experiments.hpp"
#include "oracles.hpp"

using namespace odcal;

namespace {

EnvConfig small_env(int vehicles, std::uint64_t seed) {
  EnvConfig c = default_env_config();
  c.horizon = 600;
  c.ground_truth = CountTable(c.intervals(), c.detector_count());
  if (vehicles > 0) c.ground_truth = generate_true_demand(vehicles, c, seed).table;
  return c;
}

BoConfig quick_bo(BoMode mode, double interval, int iterations) {
  BoConfig b;
  b.mode = mode;
  b.input_interval = interval;
  b.iterations = iterations;
  b.initial_samples = 4;
  b.candidates = 128;
  b.local_candidates = 32;
  return b;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("encoding dimensions") {
    const EnvConfig c = default_env_config();
    const DemandEncoding coarse = make_encoding(c, 300.0);
    const DemandEncoding fine = make_encoding(c, 5.0);
    CHECK(coarse.dimension() == 24);
    CHECK(fine.dimension() == 1440);
    CHECK(fine.dimension() == 60 * coarse.dimension());
    CHECK(coarse.count_mode());
    CHECK_FALSE(fine.count_mode());
    CHECK_THROWS_AS(make_encoding(c, 7.0), std::invalid_argument);
  }

  TEST_CASE("zero vector decodes to an empty trajectory") {
    const EnvConfig c = default_env_config();
    for (double iv : {300.0, 5.0}) {
      const DemandEncoding e = make_encoding(c, iv);
      CHECK(decode_demand(e, Eigen::VectorXd::Zero(e.dimension()), 1).departures() == 0);
    }
  }

  TEST_CASE("count mode spreads departures evenly") {
    const EnvConfig c = default_env_config();
    const DemandEncoding e = make_encoding(c, 300.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(e.dimension());
    x[e.entry(2, 1)] = 1.0;
    const Trajectory t = decode_demand(e, x, 1);
    CHECK(t.departures() == 25);
    std::vector<int> steps;
    for (int s = 0; s < t.steps(); ++s) {
      if (t.at(s, 1)) steps.push_back(s);
    }
    REQUIRE(steps.size() == 25);
    CHECK(steps.front() >= 120);
    CHECK(steps.back() < 180);
    for (std::size_t j = 0; j < steps.size(); ++j) {
      CHECK(steps[j] - 120 == static_cast<int>(std::floor((j + 0.5) * 60.0 / 25.0)));
    }
    x[e.entry(2, 1)] = 0.5;  // round(12.5) = 13
    CHECK(decode_demand(e, x, 1).departures() == 13);
  }

  TEST_CASE("probability mode saturates and is seeded") {
    const EnvConfig c = default_env_config();
    const DemandEncoding e = make_encoding(c, 5.0);
    CHECK(decode_demand(e, Eigen::VectorXd::Ones(e.dimension()), 3).departures() == 1440);
    const Eigen::VectorXd half = Eigen::VectorXd::Constant(e.dimension(), 0.5);
    CHECK(decode_demand(e, half, 3) == decode_demand(e, half, 3));
    CHECK_FALSE(decode_demand(e, half, 3) == decode_demand(e, half, 4));
  }

  TEST_CASE("GP posterior matches a dense solve") {
    const std::vector<std::vector<double>> X{{0.1}, {0.45}, {0.8}};
    const std::vector<double> y{1.0, -0.5, 2.0};
    GpConfig g;
    Eigen::MatrixXd Xm(1, 3);
    Xm << 0.1, 0.45, 0.8;
    const GpModel m = gp_fit(Xm, y, g);
    for (double xs : {0.0, 0.3, 0.6, 1.0}) {
      const oracle::DenseGp ref = oracle::dense_gp_posterior(X, y, {xs}, g.length_scale, g.signal_variance, g.noise_variance);
      const Posterior p = gp_posterior(m, Eigen::VectorXd(Eigen::VectorXd::Constant(1, xs)));
      CHECK(std::abs(p.mean - ref.mean) < 1e-8);
      CHECK(std::abs(p.variance - ref.variance) < 1e-8);
    }
  }

  TEST_CASE("GP interpolates and reverts to the prior") {
    GpConfig g;
    g.noise_variance = 1e-10;
    Eigen::MatrixXd X(2, 3);
    X << 0.1, 0.5, 0.9, 0.2, 0.2, 0.7;
    const std::vector<double> y{3.0, 1.0, 2.0};
    const GpModel m = gp_fit(X, y, g);
    for (int j = 0; j < 3; ++j) {
      const Posterior p = gp_posterior(m, Eigen::VectorXd(X.col(j)));
      CHECK(p.mean == doctest::Approx(m.standardize(y[static_cast<std::size_t>(j)])).epsilon(1e-6));
      CHECK(p.variance < 1e-6);
    }
    const Posterior far = gp_posterior(m, Eigen::VectorXd(Eigen::Vector2d(50.0, 50.0)));
    CHECK(std::abs(far.mean) < 1e-12);
    CHECK(far.variance == doctest::Approx(g.signal_variance));
  }

  TEST_CASE("GP variance at training inputs is within the noise") {
    Rng rng(2);
    GpConfig g;
    Eigen::MatrixXd X(3, 15);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = uniform01(rng);
    std::vector<double> y(15);
    for (double& v : y) v = standard_normal(rng);
    const GpModel m = gp_fit(X, y, g);
    for (const Posterior& p : gp_posterior(m, X)) {
      CHECK(p.variance >= 0.0);
      CHECK(p.variance <= m.noise + 1e-9);
    }
  }

  TEST_CASE("duplicate inputs are absorbed by jitter") {
    GpConfig g;
    g.noise_variance = 1e-14;
    Eigen::MatrixXd X = Eigen::MatrixXd::Constant(2, 4, 0.3);
    const GpModel m = gp_fit(X, std::vector<double>{1, 2, 3, 4}, g);
    CHECK(m.noise >= g.noise_variance);
    CHECK(m.noise <= g.max_jitter);
  }

  TEST_CASE("expected improvement") {
    CHECK(expected_improvement({1.0, 0.0}, 1.0) == 0.0);
    CHECK(expected_improvement({2.0, 0.0}, 1.0) == 0.0);
    CHECK(expected_improvement({-1.0, 0.0}, 1.0) == 2.0);
    CHECK(expected_improvement({0.0, 1.0}, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      const Posterior p{3.0 * standard_normal(rng), std::pow(standard_normal(rng), 2)};
      CHECK(expected_improvement(p, standard_normal(rng)) >= 0.0);
    }
  }

  TEST_CASE("expected-improvement gradient matches central differences") {
    Rng rng(11);
    GpConfig g;
    g.length_scale = 0.6;
    Eigen::MatrixXd X(4, 12);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = uniform01(rng);
    std::vector<double> y(12);
    for (double& v : y) v = standard_normal(rng);
    const GpModel m = gp_fit(X, y, g);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd x(4);
      for (double& v : x) v = uniform01(rng);
      const double best = m.standardize(*std::min_element(y.begin(), y.end()));
      Eigen::VectorXd grad, unused;
      const double ei = expected_improvement(m, x, best, grad);
      CHECK(ei == doctest::Approx(expected_improvement(gp_posterior(m, x), best)).epsilon(1e-12));
      for (Eigen::Index i = 0; i < 4; ++i) {
        const double h = 1e-6;
        Eigen::VectorXd a = x, b = x;
        a[i] += h;
        b[i] -= h;
        const double fd = (expected_improvement(m, a, best, unused) - expected_improvement(m, b, best, unused)) / (2 * h);
        CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }

  TEST_CASE("true-demand replication") {
    EnvConfig c = small_env(0, 0);
    const TrueDemand truth = generate_true_demand(40, c, 9);
    c.ground_truth = truth.table;
    const std::vector<std::uint64_t> seeds{truth.sim_seed, 100, 101, 100};
    const std::vector<double> e = replicate_true_demand(c, truth.trajectory, seeds);
    CHECK(e[0] == 0.0);
    CHECK(e[1] == e[3]);
    CHECK_THROWS_AS(replicate_true_demand(c, truth.trajectory, std::vector<std::uint64_t>{1}), std::invalid_argument);
  }

  TEST_CASE("BO incumbent is monotone and the budget is respected") {
    const EnvConfig c = small_env(40, 5);
    for (BoMode mode : {BoMode::Simultaneous, BoMode::Sequential}) {
      for (double iv : {300.0, 5.0}) {
        const CalibrationResult r = bo_calibrate(quick_bo(mode, iv, 12), c, 3);
        CHECK(r.evaluations() == 12);
        double running = std::numeric_limits<double>::infinity();
        for (const EvaluationRecord& rec : r.history) {
          running = std::min(running, rec.error);
          CHECK(rec.incumbent == running);
        }
        CHECK(r.best_error == running);
        CHECK(evaluate_demand(c, r.best_trajectory, r.best_seed).error == r.best_error);
      }
    }
  }

  TEST_CASE("a budget of one returns the single random draw") {
    const EnvConfig c = small_env(40, 5);
    BoConfig b = quick_bo(BoMode::Simultaneous, 300.0, 1);
    b.initial_samples = 1;
    const CalibrationResult r = bo_calibrate(b, c, 3);
    REQUIRE(r.evaluations() == 1);
    CHECK(r.best_error == r.history[0].error);
  }

  TEST_CASE("BO is reproducible") {
    const EnvConfig c = small_env(40, 5);
    const BoConfig b = quick_bo(BoMode::Simultaneous, 300.0, 10);
    const CalibrationResult a = bo_calibrate(b, c, 8), d = bo_calibrate(b, c, 8);
    CHECK(a.best_trajectory == d.best_trajectory);
    CHECK(a.best_error == d.best_error);
  }

  TEST_CASE("method names") {
    CHECK(method_name(quick_bo(BoMode::Simultaneous, 300.0, 1)) == "ST-BO(5min)");
    CHECK(method_name(quick_bo(BoMode::Sequential, 5.0, 1)) == "SQ-BO(5s)");
  }
}
