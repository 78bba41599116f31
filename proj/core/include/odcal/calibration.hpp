#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odcal/neural.hpp"
#include "odcal/tables.hpp"

namespace odcal {

/// One simulator evaluation made by a calibration method.
struct EvaluationRecord {
  int index = 0;            // episode (PPO) or iteration (BO), 0-based
  double error = 0.0;       // undiscounted squared detector error of this evaluation
  double incumbent = 0.0;   // best error so far, including this one
  double episode_return = 0.0;  // discounted return; PPO only
  double loss_total = 0.0;      // loss terms of the update that consumed this episode; PPO only
  double loss_clip = 0.0;
  double loss_value = 0.0;
  double entropy = 0.0;
  std::uint64_t tag = 0;        // BO: hash of the proposed decision vector
};

/// Output shared by the PPO trainer and the BO baselines: the best departure
/// trajectory found and the table it produced.
struct CalibrationResult {
  Trajectory best_trajectory;
  CountTable best_table;
  double best_error = std::numeric_limits<double>::infinity();
  std::uint64_t best_seed = 0;  // simulator seed of the evaluation that produced best_table
  int best_index = -1;
  std::vector<EvaluationRecord> history;
  std::optional<ActorCritic> final_policy;  // PPO only

  int evaluations() const noexcept { return static_cast<int>(history.size()); }
  double best_reward() const noexcept { return best_error == 0.0 ? 0.0 : -best_error; }

  /// Replace the incumbent when `error` improves on it (ties keep the earlier one).
  bool offer(double error, const Trajectory& trajectory, const CountTable& table, std::uint64_t seed, int index);
};

/// Writes trajectory.csv, table.csv, history.csv and summary.txt into `dir`.
void write_calibration_result(const CalibrationResult& result, std::span<const int> detector_links,
                              const std::filesystem::path& dir, const std::string& method);

/// Reads back a directory written by write_calibration_result (without the policy).
CalibrationResult read_calibration_result(const std::filesystem::path& dir);

}  // namespace odcal
