#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "fixtures.hpp"
#include "odcal/experiments.hpp"
#include "odcal/ppo.hpp"
#include "oracles.hpp"

using namespace odcal;

namespace {

EnvConfig small_env(int vehicles = 40, std::uint64_t seed = 5) {
  EnvConfig c = default_env_config();
  c.horizon = 600;
  c.ground_truth = CountTable(c.intervals(), c.detector_count());
  c.ground_truth = generate_true_demand(vehicles, c, seed).table;
  return c;
}

PpoConfig quick_ppo(int episodes) {
  PpoConfig p;
  p.total_episodes = episodes;
  p.parallel_envs = 2;
  p.epochs = 2;
  p.minibatch_size = 60;
  return p;
}

}  // namespace

TEST_SUITE("ppo") {
  TEST_CASE("GAE with lambda 0 is the one-step TD error") {
    const std::vector<double> r{1.0, -2.0, 0.5};
    const std::vector<double> v{0.3, 0.1, -0.4};
    const std::vector<std::uint8_t> d{0, 0, 1};
    const GaeResult g = compute_gae(r, v, 7.0, d, 0.9, 0.0);
    CHECK(g.advantages[0] == doctest::Approx(1.0 + 0.9 * 0.1 - 0.3));
    CHECK(g.advantages[1] == doctest::Approx(-2.0 + 0.9 * -0.4 - 0.1));
    CHECK(g.advantages[2] == doctest::Approx(0.5 + 0.4));
  }

  TEST_CASE("GAE hand recursion") {
    const std::vector<double> r{0.0, 1.0};
    const std::vector<double> v{0.5, 0.5};
    const GaeResult g = compute_gae(r, v, 0.0, std::vector<std::uint8_t>{0, 1}, 1.0, 1.0);
    CHECK(g.advantages == std::vector<double>{0.5, 0.5});
    CHECK(g.returns == std::vector<double>{1.0, 1.0});
  }

  TEST_CASE("GAE with lambda 1 and zero values is the reward-to-go") {
    const std::vector<double> r{1.0, 2.0, 3.0, 4.0};
    const GaeResult g = compute_gae(r, std::vector<double>(4, 0.0), 0.0, std::vector<std::uint8_t>{0, 0, 0, 1}, 1.0, 1.0);
    CHECK(g.advantages == std::vector<double>{10.0, 9.0, 7.0, 4.0});
  }

  TEST_CASE("GAE matches the telescoped sum and stops at episode ends") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 8);
      std::vector<double> r(n), v(n);
      std::vector<std::uint8_t> d(n);
      for (int i = 0; i < n; ++i) {
        r[i] = standard_normal(rng);
        v[i] = standard_normal(rng);
        d[i] = uniform01(rng) < 0.25;
      }
      const double boot = standard_normal(rng), gamma = uniform01(rng), lambda = uniform01(rng);
      const GaeResult g = compute_gae(r, v, boot, d, gamma, lambda);
      const std::vector<double> ref = oracle::telescoped_gae(r, v, boot, d, gamma, lambda);
      for (int i = 0; i < n; ++i) {
        CHECK(std::abs(g.advantages[i] - ref[i]) < 1e-10);
        CHECK(g.returns[i] == doctest::Approx(ref[i] + v[i]));
      }
    }
  }

  TEST_CASE("advantage normalization") {
    std::vector<double> a{1.0, 2.0, 3.0, 10.0};
    normalize_advantages(a);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / 4.0;
    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::sqrt(var / 4.0) == doctest::Approx(1.0).epsilon(1e-6));
    std::vector<double> same(3, 5.0);
    normalize_advantages(same);
    CHECK(same == std::vector<double>(3, 0.0));
  }

  TEST_CASE("clipped surrogate") {
    CHECK(clipped_surrogate(1.3, 1.0, 0.2) == doctest::Approx(1.2));
    CHECK(clipped_surrogate(1.3, -1.0, 0.2) == doctest::Approx(-1.3));
    CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
    CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
    for (double r = 0.8; r <= 1.2; r += 0.01) CHECK(std::abs(clipped_surrogate(r, 0.7, 0.2) - 0.7 * r) < 1e-12);
  }

  TEST_CASE("loss gradient matches central differences") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) CHECK(fixture::max_fd_relative_error(fixture::random_loss_instance(rng)) < 1e-4);
  }

  TEST_CASE("zero advantages leave only the value and entropy terms") {
    Rng rng(8);
    fixture::LossInstance in = fixture::random_loss_instance(rng);
    std::fill(in.batch.advantages.begin(), in.batch.advantages.end(), 0.0);
    in.config.value_coef = 0.0;
    in.config.entropy_coef = 0.0;
    const PpoLossAndGrad lg = ppo_loss(in.net, in.batch, in.indices, in.config);
    CHECK(lg.gradient.norm() == 0.0);
    CHECK(lg.terms.clip == 0.0);
  }

  TEST_CASE("ratio is 1 on the data that was just collected") {
    const EnvConfig c = small_env();
    DodeEnv env(c);
    Rng rng(6);
    const ActorCritic net = ActorCritic::orthogonal({c.observation_dim(), {64, 64}, c.od_count()}, rng);
    RolloutBatch batch;
    batch.action_dim = c.od_count();
    const EpisodeRollout ep = collect_episode(env, net, 11, 12, batch);
    CHECK(batch.size() == c.steps());
    CHECK(ep.trajectory.steps() == c.steps());
    CHECK(ep.error == evaluate_demand(c, ep.trajectory, 11).error);
    const GaeResult g = compute_gae(batch.rewards, batch.values_old, 0.0, batch.dones, 0.99, 0.95);
    batch.advantages = g.advantages;
    batch.returns = g.returns;
    std::vector<int> idx(static_cast<std::size_t>(batch.size()));
    std::iota(idx.begin(), idx.end(), 0);
    CHECK(ppo_loss(net, batch, idx, PpoConfig{}).terms.max_ratio_deviation < 1e-6);
  }

  TEST_CASE("gradient norm clipping") {
    Eigen::VectorXd g(2);
    g << 3.0, 4.0;
    CHECK(clip_gradient_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g.norm() == doctest::Approx(1.0));
    CHECK(clip_gradient_norm(g, 2.0) == doctest::Approx(1.0));
    CHECK(g.norm() == doctest::Approx(1.0));
  }

  TEST_CASE("non-finite losses are reported") {
    Rng rng(3);
    fixture::LossInstance in = fixture::random_loss_instance(rng);
    in.batch.returns[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ppo_loss(in.net, in.batch, in.indices, in.config), NonFinite);
  }

  TEST_CASE("training keeps a monotone incumbent and is reproducible") {
    const EnvConfig c = small_env();
    const PpoConfig p = quick_ppo(6);
    const CalibrationResult a = train(c, p, 77);
    REQUIRE(a.evaluations() == 6);
    double running = std::numeric_limits<double>::infinity();
    for (const EvaluationRecord& r : a.history) {
      running = std::min(running, r.error);
      CHECK(r.incumbent == running);
    }
    CHECK(a.best_error == running);
    CHECK(evaluate_demand(c, a.best_trajectory, a.best_seed).error == a.best_error);
    const CalibrationResult b = train(c, p, 77);
    CHECK(b.best_trajectory == a.best_trajectory);
    CHECK(b.final_policy->parameters() == a.final_policy->parameters());
  }

  TEST_CASE("invalid configurations are rejected") {
    PpoConfig p;
    p.gae_lambda = 1.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = {};
    p.epochs = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
}
