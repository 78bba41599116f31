#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "odcal/microsim.hpp"
#include "odcal/network.hpp"
#include "odcal/tables.hpp"

namespace odcal {

using Observation = std::vector<double>;
using Action = std::vector<std::uint8_t>;

struct EnvConfig {
  std::shared_ptr<const NetworkSpec> network;
  CarFollowingParams car_following;
  double input_interval = 5.0;     // s between dispatch decisions
  double output_interval = 300.0;  // s per detector aggregation
  double horizon = 1800.0;         // s
  double sim_dt = 1.0;             // s per simulator step
  double gamma = 0.995;
  CountTable ground_truth;  // K x D
  bool check_invariants = false;  // audit the simulator after every step

  int steps() const;              // T
  int intervals() const;          // K
  int steps_per_interval() const; // |psi(k)|
  int sim_steps_per_input() const;
  int od_count() const { return network->od_count(); }
  int detector_count() const { return network->detector_count(); }
  /// 2L + 1 + D
  int observation_dim() const;

  /// Throws std::invalid_argument when the interval lattice or ground-truth shape is inconsistent.
  void validate() const;
};

/// Default 30-minute, 5 s / 5 min configuration on the scaled Nguyen-Dupuis network
/// with an all-zero ground truth.
EnvConfig default_env_config();

class StepAfterDone : public std::logic_error {
 public:
  StepAfterDone() : std::logic_error("env_step called on a finished episode") {}
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

/// The calibration MDP around one Simulation.
///
/// Each step: reroute all vehicles, dispatch one vehicle per set action bit,
/// advance input_interval seconds; at the last step of every aggregation
/// interval the detectors are read, reset, and the reward is -||d'_k - d_k||^2.
class DodeEnv {
 public:
  explicit DodeEnv(EnvConfig config);

  const EnvConfig& config() const noexcept { return config_; }

  Observation reset(std::uint64_t seed);
  StepResult step(std::span<const std::uint8_t> action);

  /// 1-based index of the next decision step; T+1 after the episode ends.
  int timestep() const noexcept { return t_; }
  bool done() const noexcept { return t_ > config_.steps(); }
  /// Simulated detector table; rows of intervals not yet closed are zero.
  const CountTable& simulated() const noexcept { return simulated_; }
  const Simulation& simulation() const;
  Observation observe() const;

 private:
  EnvConfig config_;
  std::optional<Simulation> sim_;
  CountTable simulated_;
  int t_ = 1;
};

/// sum_t gamma^(t-1) r_t
double episode_return(std::span<const double> rewards, double gamma);

struct DemandEvaluation {
  CountTable simulated;                 // K x D
  std::vector<double> interval_errors;  // ||d'_k - d_k||^2 per k
  double error = 0.0;                   // sum of interval_errors
};

/// Replay a full departure trajectory open-loop and score it against the ground truth.
DemandEvaluation evaluate_demand(const EnvConfig& config, const Trajectory& trajectory, std::uint64_t seed);

}  // namespace odcal
