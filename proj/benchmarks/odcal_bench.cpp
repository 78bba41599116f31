#include <benchmark/benchmark.h>

#include "odcal/baselines.hpp"
#include "odcal/env.hpp"
#include "odcal/experiments.hpp"
#include "odcal/neural.hpp"
#include "odcal/rng.hpp"

using namespace odcal;

namespace {

/// Full evaluation of a 300-vehicle demand on the default 30-minute task.
void BM_EvaluateDemand(benchmark::State& state) {
  EnvConfig c = default_env_config();
  c.ground_truth = CountTable(c.intervals(), c.detector_count());
  const TrueDemand truth = generate_true_demand(static_cast<int>(state.range(0)), c, 1);
  c.ground_truth = truth.table;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_demand(c, truth.trajectory, ++seed).error);
  state.SetItemsProcessed(state.iterations() * c.steps());
}
BENCHMARK(BM_EvaluateDemand)->Arg(150)->Arg(300)->Unit(benchmark::kMillisecond);

ActorCritic bench_net(Rng& rng) { return ActorCritic::orthogonal({48, {64, 64}, 4}, rng); }

void BM_ForwardBatch(benchmark::State& state) {
  Rng rng(1);
  const ActorCritic net = bench_net(rng);
  const Eigen::MatrixXd input = Eigen::MatrixXd::Random(48, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_batch(input).values.sum());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBatch)->Arg(1)->Arg(180)->Arg(720);

void BM_Backward(benchmark::State& state) {
  Rng rng(2);
  const ActorCritic net = bench_net(rng);
  const Eigen::MatrixXd input = Eigen::MatrixXd::Random(48, state.range(0));
  const ActorCritic::Cache cache = net.forward_batch(input);
  const Eigen::MatrixXd dlogits = Eigen::MatrixXd::Random(4, state.range(0));
  const Eigen::RowVectorXd dvalues = Eigen::RowVectorXd::Random(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.backward(cache, dlogits, dvalues).sum());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(180)->Arg(720);

Eigen::MatrixXd unit_points(Eigen::Index dim, Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd X(dim, n);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = uniform01(rng);
  return X;
}

/// GP fit on n observations in the 24-dimensional 5-minute encoding.
void BM_GpFit(benchmark::State& state) {
  Rng rng(3);
  const Eigen::MatrixXd X = unit_points(24, state.range(0), rng);
  std::vector<double> y(static_cast<std::size_t>(state.range(0)));
  for (double& v : y) v = standard_normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(gp_fit(X, y, GpConfig{}).alpha.sum());
}
BENCHMARK(BM_GpFit)->Arg(100)->Arg(600)->Unit(benchmark::kMillisecond);

/// Posterior over one acquisition round of 2560 candidates.
void BM_GpPosterior(benchmark::State& state) {
  Rng rng(4);
  const Eigen::Index dim = state.range(1);
  const Eigen::MatrixXd X = unit_points(dim, state.range(0), rng);
  std::vector<double> y(static_cast<std::size_t>(state.range(0)));
  for (double& v : y) v = standard_normal(rng);
  const GpModel m = gp_fit(X, y, GpConfig{});
  const Eigen::MatrixXd C = unit_points(dim, 2560, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gp_posterior(m, C).size());
}
BENCHMARK(BM_GpPosterior)->Args({100, 24})->Args({600, 24})->Args({600, 720})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
