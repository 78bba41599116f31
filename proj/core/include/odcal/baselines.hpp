#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "odcal/calibration.hpp"
#include "odcal/env.hpp"

namespace odcal {

class IllConditioned : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-seed errors of the true trajectory replayed under different simulator seeds.
std::vector<double> replicate_true_demand(const EnvConfig& config, const Trajectory& truth,
                                          std::span<const std::uint64_t> seeds);

/// How a continuous vector in [0,1]^n maps to departures.
///
/// Blocks of `block_steps` input steps share one entry per OD pair. With
/// block_steps > 1 the entry is a flow count round(x * c_max) spread evenly
/// over the block; with block_steps == 1 it is a departure probability
/// thresholded against a fixed seeded uniform draw.
struct DemandEncoding {
  int steps = 0;        // T
  int n_od = 0;
  int block_steps = 1;  // input steps per decision block
  double c_max = 25.0;  // veh per OD per block (count mode)

  int blocks() const { return steps / block_steps; }
  int dimension() const { return blocks() * n_od; }
  bool count_mode() const { return block_steps > 1; }
  /// Entry index of (block, od); block-major.
  int entry(int block, int od) const { return block * n_od + od; }
};

/// Encoding for a decision interval of `interval_seconds` on the given env.
DemandEncoding make_encoding(const EnvConfig& config, double interval_seconds, double c_max = 25.0);

Trajectory decode_demand(const DemandEncoding& enc, const Eigen::VectorXd& x, std::uint64_t seed);

struct GpConfig {
  double length_scale = 0.2;
  double signal_variance = 1.0;
  double noise_variance = 1e-4;
  double max_jitter = 1e-2;
};

/// Zero-mean squared-exponential GP on standardized targets.
struct GpModel {
  GpConfig config;
  Eigen::MatrixXd X;  // dim x n, one observation per column
  Eigen::VectorXd y;  // standardized targets
  double y_mean = 0.0;
  double y_scale = 1.0;
  double noise = 0.0;  // noise plus any jitter actually used
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd alpha;  // (K + noise I)^-1 y

  double standardize(double raw) const { return (raw - y_mean) / y_scale; }
};

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpConfig& config);

/// Throws IllConditioned when Cholesky fails even at max_jitter.
GpModel gp_fit(const Eigen::MatrixXd& X, std::span<const double> y, const GpConfig& config);

struct Posterior {
  double mean = 0.0;      // standardized units
  double variance = 0.0;  // standardized units, clamped at 0
};

Posterior gp_posterior(const GpModel& model, const Eigen::VectorXd& x);
/// Posterior for every column of `candidates`.
std::vector<Posterior> gp_posterior(const GpModel& model, const Eigen::MatrixXd& candidates);

/// Expected improvement below `best_y` (minimization).
double expected_improvement(const Posterior& p, double best_y);

/// Expected improvement at `x` and its gradient with respect to `x`.
double expected_improvement(const GpModel& model, const Eigen::VectorXd& x, double best_y, Eigen::VectorXd& grad);

enum class BoMode { Simultaneous, Sequential };

struct BoConfig {
  BoMode mode = BoMode::Simultaneous;
  double input_interval = 300.0;  // s; 300 or the env input interval
  int iterations = 200;           // simulator evaluations, initial samples included
  int initial_samples = 10;       // per stage in sequential mode
  GpConfig gp;
  int candidates = 2048;          // uniform acquisition candidates per step
  int local_candidates = 512;     // perturbations of the incumbent per step
  int refine_starts = 4;          // best candidates refined by projected EI ascent
  int refine_steps = 20;
  double c_max = 25.0;
  bool log_objective = true;      // model log(1 + error) instead of the raw error
  bool scale_length = true;       // GP length-scale multiplied by sqrt(decision dimension)

  void validate() const;
};

std::string method_name(const BoConfig& config);

using BoProgress = std::function<bool(const CalibrationResult&)>;

/// Bayesian-optimization calibration. Every evaluation is scored with its
/// full-horizon error for the incumbent; sequential mode optimizes each
/// interval's own error with earlier intervals frozen.
CalibrationResult bo_calibrate(const BoConfig& config, const EnvConfig& env_config, std::uint64_t seed,
                               const BoProgress& progress = {});

}  // namespace odcal
