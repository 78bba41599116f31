#include "odcal/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "odcal/rng.hpp"

namespace odcal {

void PpoConfig::validate() const {
  if (!(clip_epsilon > 0.0)) throw std::invalid_argument("clip epsilon must be > 0");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("gae lambda must be in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (minibatch_size < 1) throw std::invalid_argument("minibatch size must be >= 1");
  if (parallel_envs < 1) throw std::invalid_argument("parallel envs must be >= 1");
  if (total_episodes < 0) throw std::invalid_argument("episode budget must be >= 0");
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("max grad norm must be > 0");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                      std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("GAE inputs must be aligned");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 < n ? values[i + 1] : bootstrap_value;
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
  }
  return out;
}

void normalize_advantages(std::vector<double>& advantages) {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : advantages) a = (a - mean) / (sd + 1e-8);
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

struct LossWork {
  PpoLossTerms terms;
  Eigen::MatrixXd dlogits;
  Eigen::RowVectorXd dvalues;
  ActorCritic::Cache cache;
};

LossWork evaluate_loss(const ActorCritic& net, const RolloutBatch& batch, std::span<const int> indices,
                       const PpoConfig& config, bool want_grad) {
  if (indices.empty()) throw std::invalid_argument("empty minibatch");
  const auto bsz = static_cast<Eigen::Index>(indices.size());
  const int n_act = batch.action_dim;
  Eigen::MatrixXd x(batch.observations.rows(), bsz);
  for (Eigen::Index j = 0; j < bsz; ++j) x.col(j) = batch.observations.col(indices[static_cast<std::size_t>(j)]);

  LossWork w;
  w.cache = net.forward_batch(x);
  if (want_grad) {
    w.dlogits.resize(n_act, bsz);
    w.dvalues.resize(bsz);
  }
  const double inv_b = 1.0 / static_cast<double>(bsz);
  const double eps = config.clip_epsilon;
  double sum_clip = 0.0, sum_value = 0.0, sum_entropy = 0.0;
  int clipped_count = 0;
  for (Eigen::Index j = 0; j < bsz; ++j) {
    const int idx = indices[static_cast<std::size_t>(j)];
    const auto act = batch.action(idx);
    double logp = 0.0;
    double entropy = 0.0;
    for (int i = 0; i < n_act; ++i) {
      const double z = w.cache.logits(i, j);
      const double p = sigmoid(z);
      const double lp1 = -softplus(-z);
      const double lp0 = -softplus(z);
      logp += act[static_cast<std::size_t>(i)] ? lp1 : lp0;
      entropy += -p * lp1 - (1.0 - p) * lp0;
    }
    const double ratio = std::exp(logp - batch.log_prob_old[static_cast<std::size_t>(idx)]);
    const double adv = batch.advantages[static_cast<std::size_t>(idx)];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    const double surrogate = std::min(unclipped, clipped);
    const double verr = w.cache.values(j) - batch.returns[static_cast<std::size_t>(idx)];
    if (!std::isfinite(ratio) || !std::isfinite(surrogate) || !std::isfinite(verr) || !std::isfinite(entropy)) {
      throw NonFinite("non-finite PPO loss term at sample " + std::to_string(idx));
    }
    sum_clip += surrogate;
    sum_value += verr * verr;
    sum_entropy += entropy;
    w.terms.max_ratio_deviation = std::max(w.terms.max_ratio_deviation, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > eps) ++clipped_count;
    if (want_grad) {
      const double dsurr_dratio = unclipped <= clipped ? adv : 0.0;
      for (int i = 0; i < n_act; ++i) {
        const double z = w.cache.logits(i, j);
        const double p = sigmoid(z);
        const double dlogp = (act[static_cast<std::size_t>(i)] ? 1.0 : 0.0) - p;
        const double dentropy = -z * p * (1.0 - p);
        w.dlogits(i, j) = -inv_b * (dsurr_dratio * ratio * dlogp + config.entropy_coef * dentropy);
      }
      w.dvalues(j) = inv_b * 2.0 * config.value_coef * verr;
    }
  }
  w.terms.clip = sum_clip * inv_b;
  w.terms.value = sum_value * inv_b;
  w.terms.entropy = sum_entropy * inv_b;
  w.terms.total = -(w.terms.clip - config.value_coef * w.terms.value + config.entropy_coef * w.terms.entropy);
  w.terms.clip_fraction = clipped_count * inv_b;
  if (!std::isfinite(w.terms.total)) throw NonFinite("non-finite PPO loss");
  return w;
}

}  // namespace

Eigen::VectorXd observation_scale(const EnvConfig& config) {
  const NetworkSpec& net = *config.network;
  Eigen::VectorXd s(config.observation_dim());
  Eigen::Index i = 0;
  for (const LinkSpec& l : net.links()) {
    s(i++) = std::max(1.0, l.length / (config.car_following.vehicle_length + config.car_following.min_gap)) / 10.0;
    s(i++) = l.free_flow_speed;
  }
  s(i++) = config.steps();
  for (int d = 0; d < config.detector_count(); ++d) s(i++) = config.steps_per_interval() / 4.0;
  return s;
}

PpoLossAndGrad ppo_loss(const ActorCritic& net, const RolloutBatch& batch, std::span<const int> indices,
                        const PpoConfig& config) {
  LossWork w = evaluate_loss(net, batch, indices, config, true);
  PpoLossAndGrad out;
  out.terms = w.terms;
  out.gradient = net.backward(w.cache, w.dlogits, w.dvalues);
  if (!out.gradient.allFinite()) throw NonFinite("non-finite PPO gradient");
  return out;
}

double ppo_loss_value(const ActorCritic& net, const RolloutBatch& batch, std::span<const int> indices,
                      const PpoConfig& config) {
  return evaluate_loss(net, batch, indices, config, false).terms.total;
}

double clip_gradient_norm(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
  return norm;
}

EpisodeRollout collect_episode(DodeEnv& env, const ActorCritic& net, std::uint64_t sim_seed,
                               std::uint64_t policy_seed, RolloutBatch& batch, double reward_scale,
                               const Eigen::VectorXd* input_scale) {
  const EnvConfig& cfg = env.config();
  const int n_od = cfg.od_count();
  batch.action_dim = n_od;
  EpisodeRollout out;
  out.sim_seed = sim_seed;
  out.trajectory = Trajectory(cfg.steps(), n_od);
  out.rewards.reserve(static_cast<std::size_t>(cfg.steps()));

  const Eigen::Index start = batch.observations.cols();
  batch.observations.conservativeResize(cfg.observation_dim(), start + cfg.steps());

  Rng rng(policy_seed);
  std::vector<double> draws(static_cast<std::size_t>(n_od));
  Observation obs = env.reset(sim_seed);
  for (int t = 0; t < cfg.steps(); ++t) {
    if (input_scale) {
      for (std::size_t i = 0; i < obs.size(); ++i) obs[i] /= (*input_scale)(static_cast<Eigen::Index>(i));
    }
    const PolicyOutput po = net.forward(obs);
    for (double& d : draws) d = uniform01(rng);
    const SampledAction sa = sample_action({po.logits.data(), static_cast<std::size_t>(po.logits.size())}, draws);
    batch.observations.col(start + t) = Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    batch.actions.insert(batch.actions.end(), sa.bits.begin(), sa.bits.end());
    batch.log_prob_old.push_back(sa.log_prob);
    batch.values_old.push_back(po.value);
    std::copy(sa.bits.begin(), sa.bits.end(), out.trajectory.step(t).begin());

    StepResult sr = env.step(sa.bits);
    batch.rewards.push_back(sr.reward * reward_scale);
    batch.dones.push_back(sr.done ? 1 : 0);
    out.rewards.push_back(sr.reward);
    out.error -= sr.reward;
    obs = std::move(sr.observation);
  }
  out.table = env.simulated();
  return out;
}

CalibrationResult train(const EnvConfig& env_config, const PpoConfig& config, std::uint64_t seed,
                        const TrainProgress& progress) {
  config.validate();
  env_config.validate();
  MlpShape shape{env_config.observation_dim(), config.hidden, env_config.od_count()};
  Rng init_rng(derive_seed(seed, "init"));
  ActorCritic net = ActorCritic::orthogonal(shape, init_rng);
  Adam adam(net.parameter_count(), config.adam);
  DodeEnv env(env_config);
  const Eigen::VectorXd input_scale = observation_scale(env_config);

  CalibrationResult result;
  int episode = 0;
  int update = 0;
  while (episode < config.total_episodes) {
    const int n = std::min(config.parallel_envs, config.total_episodes - episode);
    RolloutBatch batch;
    std::vector<EvaluationRecord> records;
    for (int e = 0; e < n; ++e) {
      const int k = episode + e;
      const std::string tag = "ep" + std::to_string(k);
      const EpisodeRollout roll = collect_episode(env, net, derive_seed(seed, "train/" + tag),
                                                  derive_seed(seed, "policy/" + tag), batch, config.reward_scale,
                                                  config.scale_observations ? &input_scale : nullptr);
      result.offer(roll.error, roll.trajectory, roll.table, roll.sim_seed, k);
      EvaluationRecord rec;
      rec.index = k;
      rec.error = roll.error;
      rec.incumbent = result.best_error;
      rec.episode_return = episode_return(roll.rewards, config.gamma);
      records.push_back(rec);
    }

    GaeResult gae = compute_gae(batch.rewards, batch.values_old, 0.0, batch.dones, config.gamma, config.gae_lambda);
    batch.returns = std::move(gae.returns);
    batch.advantages = std::move(gae.advantages);
    normalize_advantages(batch.advantages);

    Rng shuffle_rng(derive_seed(seed, "shuffle/u" + std::to_string(update)));
    std::vector<int> order(static_cast<std::size_t>(batch.size()));
    std::iota(order.begin(), order.end(), 0);
    PpoLossTerms mean_terms;
    int steps = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng() % i)]);
      }
      for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.minibatch_size)) {
        const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.minibatch_size));
        PpoLossAndGrad lg = ppo_loss(net, batch, std::span<const int>(order).subspan(begin, end - begin), config);
        clip_gradient_norm(lg.gradient, config.max_grad_norm);
        adam.update(net.parameters(), lg.gradient);
        if (!net.parameters().allFinite()) throw NonFinite("parameters became non-finite");
        mean_terms.total += lg.terms.total;
        mean_terms.clip += lg.terms.clip;
        mean_terms.value += lg.terms.value;
        mean_terms.entropy += lg.terms.entropy;
        ++steps;
      }
    }
    for (EvaluationRecord& rec : records) {
      rec.loss_total = mean_terms.total / steps;
      rec.loss_clip = mean_terms.clip / steps;
      rec.loss_value = mean_terms.value / steps;
      rec.entropy = mean_terms.entropy / steps;
      result.history.push_back(rec);
    }
    episode += n;
    ++update;
    if (progress && !progress(result)) break;
  }
  result.final_policy = std::move(net);
  return result;
}

}  // namespace odcal
