#include <filesystem>
#include <fstream>
#include <algorithm>
#include <numeric>

#include <doctest.h>

#include "odcal/env.hpp"
#include "odcal/rng.hpp"

using namespace odcal;

namespace {

Trajectory random_trajectory(const EnvConfig& c, double p, std::uint64_t seed) {
  Rng rng(seed);
  Trajectory tr(c.steps(), c.od_count());
  for (int t = 0; t < tr.steps(); ++t) {
    for (int od = 0; od < tr.od_count(); ++od) tr.at(t, od) = uniform01(rng) < p ? 1 : 0;
  }
  return tr;
}

/// A chain of `links` links with detectors on the first `detectors` of them.
NetworkSpec chain(int links, int detectors) {
  std::vector<NodeId> nodes;
  std::vector<LinkSpec> ls;
  std::vector<LinkId> ds;
  for (int i = 0; i <= links; ++i) nodes.push_back(i + 1);
  for (int i = 0; i < links; ++i) ls.push_back({i, i + 1, i + 2, 50.0, 10.0, 1, false});
  for (int i = 0; i < detectors; ++i) ds.push_back(i);
  return NetworkSpec(nodes, ls, {{1, links + 1}}, ds);
}

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("interval lattice and observation dimension") {
    const EnvConfig c = default_env_config();
    CHECK(c.steps() == 360);
    CHECK(c.intervals() == 6);
    CHECK(c.steps_per_interval() == 60);
    CHECK(c.observation_dim() == 48);
    EnvConfig small = c;
    small.network = std::make_shared<const NetworkSpec>(chain(12, 2));
    CHECK(small.observation_dim() == 27);
  }

  TEST_CASE("invalid lattices are rejected") {
    EnvConfig c = default_env_config();
    c.output_interval = 7.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = default_env_config();
    c.gamma = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = default_env_config();
    c.ground_truth = CountTable(5, 9);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }

  TEST_CASE("reset observation") {
    const EnvConfig c = default_env_config();
    DodeEnv env(c);
    const Observation o = env.reset(3);
    REQUIRE(o.size() == 48);
    for (int l = 0; l < 19; ++l) {
      CHECK(o[static_cast<std::size_t>(2 * l)] == 0.0);
      CHECK(o[static_cast<std::size_t>(2 * l + 1)] == doctest::Approx(c.network->link(l).free_flow_speed));
    }
    CHECK(o[38] == 1.0);
    for (std::size_t d = 39; d < 48; ++d) CHECK(o[d] == 0.0);
    CHECK(env.reset(3) == o);
  }

  TEST_CASE("rewards appear only at aggregation boundaries") {
    EnvConfig c = default_env_config();
    c.ground_truth.at(0, 0) = 2;
    DodeEnv env(c);
    env.reset(1);
    const Action zero(4, 0);
    for (int t = 1; t <= c.steps(); ++t) {
      const StepResult r = env.step(zero);
      if (t == 60) CHECK(r.reward == -4.0);
      else CHECK(r.reward == 0.0);
      CHECK(r.done == (t == c.steps()));
    }
    CHECK_THROWS_AS(env.step(zero), StepAfterDone);
  }

  TEST_CASE("zero demand against zero truth returns 0") {
    const EnvConfig c = default_env_config();
    DodeEnv env(c);
    env.reset(2);
    std::vector<double> rewards;
    while (!env.done()) rewards.push_back(env.step(Action(4, 0)).reward);
    CHECK(episode_return(rewards, c.gamma) == 0.0);
  }

  TEST_CASE("open-loop evaluation agrees with the summed rewards") {
    EnvConfig c = default_env_config();
    c.horizon = 900;
    c.ground_truth = CountTable(c.intervals(), c.detector_count());
    for (int k = 0; k < c.intervals(); ++k) {
      for (int d = 0; d < c.detector_count(); ++d) c.ground_truth.at(k, d) = (k + 2 * d) % 7;
    }
    for (std::uint64_t seed : {1, 2, 3}) {
      const Trajectory tr = random_trajectory(c, 0.15, seed);
      DodeEnv env(c);
      env.reset(seed + 10);
      double sum = 0.0;
      int nonzero_steps = 0;
      for (int t = 0; t < tr.steps(); ++t) {
        const StepResult r = env.step(tr.step(t));
        sum += r.reward;
        if (r.reward != 0.0) {
          ++nonzero_steps;
          CHECK((t + 1) % c.steps_per_interval() == 0);
        }
        CHECK(r.observation[38] == std::min(t + 2, c.steps()));
      }
      const DemandEvaluation ev = evaluate_demand(c, tr, seed + 10);
      CHECK(ev.error == -sum);
      CHECK(ev.simulated == env.simulated());
      CHECK(nonzero_steps <= c.intervals());
      CHECK(std::accumulate(ev.interval_errors.begin(), ev.interval_errors.end(), 0.0) == ev.error);
    }
  }

  TEST_CASE("detector counts in the observation never exceed insertions") {
    const EnvConfig c = default_env_config();
    const Trajectory tr = random_trajectory(c, 0.3, 9);
    DodeEnv env(c);
    env.reset(4);
    long long inserted = 0;
    for (int t = 0; t < 120; ++t) {
      for (std::uint8_t b : tr.step(t)) inserted += b;
      const StepResult r = env.step(tr.step(t));
      for (std::size_t d = 39; d < 48; ++d) {
        CHECK(r.observation[d] >= 0.0);
        CHECK(r.observation[d] <= static_cast<double>(inserted));
      }
    }
  }

  TEST_CASE("episode return") {
    std::vector<double> r(360, 0.0);
    r.back() = -5.0;
    CHECK(episode_return(r, 1.0) == -5.0);
    CHECK(episode_return(std::vector<double>{-1.0, -1.0}, 0.5) == -1.5);
  }

  TEST_CASE("squared error helpers") {
    CountTable a(2, 3), b(2, 3);
    b.at(1, 2) = 1;
    CHECK(squared_error(a, b) == 1.0);
    b.at(0, 0) = 3;
    CHECK(squared_error_row(a, b, 0) == 9.0);
    CHECK(squared_error(a, b) == 10.0);
  }
}

TEST_SUITE("tables") {
  TEST_CASE("CSV round trips") {
    const auto dir = std::filesystem::temp_directory_path() / "odcal_tables_test";
    std::filesystem::create_directories(dir);
    CountTable t(3, 2);
    t.at(0, 1) = 4;
    t.at(2, 0) = 17;
    const std::vector<int> links{5, 9};
    write_count_table(t, links, dir / "t.csv");
    std::vector<int> header;
    CHECK(read_count_table(dir / "t.csv", &header) == t);
    CHECK(header == links);

    Trajectory tr(5, 4);
    tr.at(0, 3) = 1;
    tr.at(4, 0) = 1;
    write_trajectory(tr, dir / "tr.csv");
    CHECK(read_trajectory(dir / "tr.csv") == tr);
    CHECK(tr.departures() == 2);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("malformed CSV is a format error") {
    const auto path = std::filesystem::temp_directory_path() / "odcal_bad_table.csv";
    {
      std::ofstream(path) << "1,2\n3,x\n";
    }
    CHECK_THROWS_AS(read_count_table(path), FormatError);
    std::filesystem::remove(path);
  }
}
