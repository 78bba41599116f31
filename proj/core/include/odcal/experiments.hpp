#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <string>
#include <vector>

#include "odcal/baselines.hpp"
#include "odcal/env.hpp"
#include "odcal/ppo.hpp"
#include "odcal/stats.hpp"

namespace odcal {

struct TrueDemand {
  Trajectory trajectory;
  CountTable table;     // K x D ground truth
  int requested = 0;
  long long realized = 0;
  int draws = 0;        // Bernoulli passes until the total was within 5%
  std::uint64_t sim_seed = 0;
};

/// Uniform Bernoulli departures with p = total / (T * n_od), redrawn until the
/// realized total is within 5% of the request, then simulated once.
TrueDemand generate_true_demand(int total_vehicles, const EnvConfig& config, std::uint64_t seed);

/// K x n_od departures per aggregation interval.
CountTable od_interval_aggregate(const Trajectory& trajectory, int steps_per_interval);

enum class MethodKind { TrueReplication, Ppo, Bo };

struct MethodSpec {
  std::string name;
  MethodKind kind = MethodKind::Ppo;
  BoConfig bo;  // Bo only; iterations are overridden by the plan budget
};

/// The standard roster: true replication, RL-PPO, ST/SQ-BO at 5 min and 5 s.
std::vector<MethodSpec> default_roster(double env_input_interval);

struct ExperimentPlan {
  EnvConfig env;                 // carries the shared ground truth
  Trajectory truth_trajectory;
  std::uint64_t truth_seed = 0;  // simulator seed that produced the ground truth
  std::vector<MethodSpec> methods;
  int repetitions = 5;
  int budget = 600;              // simulator evaluations per calibration cell
  PpoConfig ppo;                 // total_episodes is overridden by the budget
  std::uint64_t seed = 1;
  int jobs = 1;

  void validate() const;
};

/// Seed of repetition `rep` of `method`.
std::uint64_t cell_seed(std::uint64_t plan_seed, const std::string& method, int rep);
/// Held-out simulator seed used to re-score every method's best trajectory.
std::uint64_t evaluation_seed(std::uint64_t plan_seed);

enum class FailureKind { None, NonFinite, Simulator, Other };

struct RepetitionResult {
  int rep = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  FailureKind failure = FailureKind::None;
  std::string message;
  CalibrationResult calibration;
  double eval_error = 0.0;  // best trajectory replayed with the evaluation seed
  CountTable eval_table;
  CountTable od_counts;     // K x n_od of the best trajectory

  double best_error() const { return calibration.best_error; }
  double best_reward() const { return calibration.best_reward(); }
};

struct MethodResult {
  MethodSpec spec;
  std::vector<RepetitionResult> reps;

  std::vector<double> best_errors() const;  // successful repetitions only
  double mean_best_reward() const;
  double median_best_error() const;
};

struct PlanResult {
  std::vector<MethodResult> methods;
  /// Method indices sorted by mean best reward, best first; failed-only methods last.
  std::vector<int> ordering() const;
};

using CellProgress = std::function<void(const std::string& method, int rep, const RepetitionResult&)>;

/// Runs every (method, repetition) cell; failing cells are flagged and skipped.
PlanResult run_plan(const ExperimentPlan& plan, const CellProgress& progress = {});

/// Runs a single calibration cell.
RepetitionResult run_cell(const ExperimentPlan& plan, const MethodSpec& method, int rep);

/// Everything besides the cells needed to regenerate the report files.
struct ReportInputs {
  CountTable truth_table;
  Trajectory truth_trajectory;
  std::vector<int> detector_links;
  int steps_per_interval = 0;
};

/// summary.csv, summary.txt and the long-format reward_trend.csv,
/// link_flows.csv, od_counts.csv, metrics.csv and significance.csv.
void write_report(const PlanResult& result, const ReportInputs& inputs, const std::filesystem::path& dir,
                  double alpha = 0.05);

/// Results directory: one subdirectory per cell plus summary.csv, summary.txt
/// and long-format reward_trend.csv, link_flows.csv, od_counts.csv,
/// metrics.csv and significance.csv.
void write_plan_results(const PlanResult& result, const ExperimentPlan& plan, const std::filesystem::path& dir,
                        double alpha = 0.05);

/// Rebuilds the per-cell results written by write_plan_results.
PlanResult read_plan_results(const std::filesystem::path& dir, ReportInputs* inputs = nullptr);

/// Directory name for a method label such as "ST-BO(5min)".
std::string method_slug(const std::string& name);

}  // namespace odcal
