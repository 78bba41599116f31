#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "odcal/calibration.hpp"
#include "odcal/env.hpp"
#include "odcal/neural.hpp"

namespace odcal {

class NonFinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PpoConfig {
  double clip_epsilon = 0.2;
  double value_coef = 0.5;    // c1
  double entropy_coef = 0.01; // c2
  double gae_lambda = 0.95;
  double gamma = 0.995;
  int epochs = 10;
  int minibatch_size = 360;
  int parallel_envs = 4;      // E episodes per update
  int total_episodes = 2000;
  double max_grad_norm = 0.5;
  AdamConfig adam;
  std::vector<int> hidden{64, 64};
  /// Multiplies rewards before GAE and the value regression. The policy
  /// update is invariant to it (advantages are normalized); it only keeps the
  /// critic's targets in a range where its gradient does not swamp the actor's.
  double reward_scale = 1e-3;
  /// Divide observations by fixed per-feature constants before the network.
  bool scale_observations = true;

  void validate() const;
};

/// Per-step records of E complete episodes.
struct RolloutBatch {
  Eigen::MatrixXd observations;       // obs_dim x N
  std::vector<std::uint8_t> actions;  // N x n_od, row-major
  std::vector<double> log_prob_old;
  std::vector<double> rewards;
  std::vector<double> values_old;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  int action_dim = 0;

  int size() const noexcept { return static_cast<int>(rewards.size()); }
  std::span<const std::uint8_t> action(int i) const {
    return {actions.data() + static_cast<std::size_t>(i * action_dim), static_cast<std::size_t>(action_dim)};
  }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value
};

/// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t);
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}.
/// V(s_{n}) for the last stored step is `bootstrap_value`.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                      std::span<const std::uint8_t> dones, double gamma, double lambda);

/// In-place (a - mean) / (std + 1e-8) with the population standard deviation.
void normalize_advantages(std::vector<double>& advantages);

/// min(r A, clip(r, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double epsilon);

struct PpoLossTerms {
  double total = 0.0;      // -(L_clip - c1 L_vf + c2 H)
  double clip = 0.0;       // L_clip
  double value = 0.0;      // L_vf
  double entropy = 0.0;    // mean entropy
  double max_ratio_deviation = 0.0;  // max |r_t - 1|
  double clip_fraction = 0.0;
};

struct PpoLossAndGrad {
  PpoLossTerms terms;
  Eigen::VectorXd gradient;
};

/// Composite clipped PPO loss over `indices` of `batch` with its exact gradient.
/// Throws NonFinite if any ratio or loss term is not finite.
PpoLossAndGrad ppo_loss(const ActorCritic& net, const RolloutBatch& batch, std::span<const int> indices,
                        const PpoConfig& config);

/// Loss value only, used by finite-difference checks.
double ppo_loss_value(const ActorCritic& net, const RolloutBatch& batch, std::span<const int> indices,
                      const PpoConfig& config);

/// Rescale `grad` in place so its L2 norm is at most `max_norm`; returns the original norm.
double clip_gradient_norm(Eigen::VectorXd& grad, double max_norm);

struct EpisodeRollout {
  Trajectory trajectory;
  CountTable table;
  std::vector<double> rewards;
  double error = 0.0;
  std::uint64_t sim_seed = 0;
};

/// Runs one full episode with the stochastic policy, appending its steps to `batch`.
EpisodeRollout collect_episode(DodeEnv& env, const ActorCritic& net, std::uint64_t sim_seed,
                               std::uint64_t policy_seed, RolloutBatch& batch, double reward_scale = 1.0,
                               const Eigen::VectorXd* input_scale = nullptr);

/// Fixed per-feature divisors: link jam capacity / 10 for counts, free-flow
/// speed for speeds, T for the step index, |psi(k)| / 4 for detector counts.
Eigen::VectorXd observation_scale(const EnvConfig& config);

/// Called after every update with the running result; return false to stop early.
using TrainProgress = std::function<bool(const CalibrationResult&)>;

/// PPO calibration: collect E episodes, GAE, per-batch advantage
/// normalization, `epochs` passes of shuffled minibatch Adam steps on the
/// clipped loss; keeps the lowest-error episode as the incumbent.
CalibrationResult train(const EnvConfig& env_config, const PpoConfig& config, std::uint64_t seed,
                        const TrainProgress& progress = {});

}  // namespace odcal
