#include "odcal/env.hpp"

#include <cmath>
#include <string>

namespace odcal {

namespace {

int exact_ratio(double num, double den, const char* what) {
  const double r = num / den;
  const double rounded = std::round(r);
  if (!(den > 0.0) || rounded < 1.0 || std::abs(r - rounded) > 1e-9) {
    throw std::invalid_argument(std::string(what) + " must be a positive integer multiple");
  }
  return static_cast<int>(rounded);
}

}  // namespace

int EnvConfig::steps() const { return exact_ratio(horizon, input_interval, "horizon / input_interval"); }
int EnvConfig::intervals() const { return exact_ratio(horizon, output_interval, "horizon / output_interval"); }
int EnvConfig::steps_per_interval() const {
  return exact_ratio(output_interval, input_interval, "output_interval / input_interval");
}
int EnvConfig::sim_steps_per_input() const {
  return exact_ratio(input_interval, sim_dt, "input_interval / sim_dt");
}
int EnvConfig::observation_dim() const { return 2 * network->link_count() + 1 + network->detector_count(); }

void EnvConfig::validate() const {
  if (!network) throw std::invalid_argument("EnvConfig has no network");
  car_following.validate();
  steps_per_interval();
  sim_steps_per_input();
  if (steps() != intervals() * steps_per_interval()) {
    throw std::invalid_argument("horizon must be an integer multiple of output_interval");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (ground_truth.rows() != intervals() || ground_truth.cols() != detector_count()) {
    throw std::invalid_argument("ground truth must be K x D (" + std::to_string(intervals()) + " x " +
                                std::to_string(detector_count()) + ")");
  }
}

EnvConfig default_env_config() {
  EnvConfig c;
  c.network = std::make_shared<const NetworkSpec>(build_nguyen_dupuis(3.0));
  c.ground_truth = CountTable(c.intervals(), c.detector_count());
  return c;
}

DodeEnv::DodeEnv(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  t_ = config_.steps() + 1;
}

const Simulation& DodeEnv::simulation() const {
  if (!sim_) throw std::logic_error("environment not reset");
  return *sim_;
}

Observation DodeEnv::reset(std::uint64_t seed) {
  sim_.emplace(config_.network, config_.car_following, seed, config_.sim_dt);
  sim_->set_checked(config_.check_invariants);
  simulated_ = CountTable(config_.intervals(), config_.detector_count());
  t_ = 1;
  return observe();
}

Observation DodeEnv::observe() const {
  const Simulation& sim = simulation();
  const SimSnapshot snap = sim.snapshot();
  Observation obs;
  obs.reserve(static_cast<std::size_t>(config_.observation_dim()));
  for (std::size_t l = 0; l < snap.vehicle_count.size(); ++l) {
    obs.push_back(static_cast<double>(snap.vehicle_count[l]));
    obs.push_back(snap.mean_speed[l]);
  }
  obs.push_back(static_cast<double>(std::min(t_, config_.steps())));
  for (int c : sim.detector_counts()) obs.push_back(static_cast<double>(c));
  return obs;
}

StepResult DodeEnv::step(std::span<const std::uint8_t> action) {
  if (!sim_) throw std::logic_error("environment not reset");
  if (done()) throw StepAfterDone();
  if (static_cast<int>(action.size()) != config_.od_count()) {
    throw std::invalid_argument("action length must equal the OD pair count");
  }
  Simulation& sim = *sim_;
  sim.reroute_all();
  for (int od = 0; od < config_.od_count(); ++od) {
    const std::uint8_t bit = action[static_cast<std::size_t>(od)];
    if (bit > 1) throw std::invalid_argument("action entries must be 0 or 1");
    if (bit) sim.insert_vehicle(od, t_);
  }
  for (int s = 0; s < config_.sim_steps_per_input(); ++s) sim.step();

  StepResult out;
  const int per = config_.steps_per_interval();
  if (t_ % per == 0) {
    const int k = t_ / per - 1;
    const std::vector<int> counts = sim.read_and_reset_detectors();
    std::copy(counts.begin(), counts.end(), simulated_.row(k).begin());
    const double err = squared_error_row(simulated_, config_.ground_truth, k);
    out.reward = err == 0.0 ? 0.0 : -err;
  }
  ++t_;
  out.done = done();
  out.observation = observe();
  return out;
}

double episode_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

DemandEvaluation evaluate_demand(const EnvConfig& config, const Trajectory& trajectory, std::uint64_t seed) {
  if (trajectory.steps() != config.steps() || trajectory.od_count() != config.od_count()) {
    throw std::invalid_argument("trajectory must be T x n_od");
  }
  DodeEnv env(config);
  env.reset(seed);
  DemandEvaluation result;
  for (int t = 0; t < trajectory.steps(); ++t) {
    const StepResult r = env.step(trajectory.step(t));
    if ((t + 1) % config.steps_per_interval() == 0) result.interval_errors.push_back(-r.reward);
  }
  result.simulated = env.simulated();
  for (double e : result.interval_errors) result.error += e;
  return result;
}

}  // namespace odcal
