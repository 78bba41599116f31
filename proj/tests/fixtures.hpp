#pragma once

// Randomized inputs shared by the unit and acceptance tests.

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "odcal/neural.hpp"
#include "odcal/ppo.hpp"
#include "odcal/rng.hpp"

namespace fixture {

struct LossInstance {
  odcal::ActorCritic net{odcal::MlpShape{1, {1}, 1}};
  odcal::RolloutBatch batch;
  std::vector<int> indices;
  odcal::PpoConfig config;
};

/// A small network and minibatch whose probability ratios are spread over
/// both sides of the clip range but stay at least `margin` away from its edges,
/// where the loss has kinks.
inline LossInstance random_loss_instance(odcal::Rng& rng, double margin = 0.02) {
  using odcal::standard_normal;
  using odcal::uniform01;
  LossInstance in;
  const int obs_dim = 3 + static_cast<int>(rng() % 4);
  const int act_dim = 2 + static_cast<int>(rng() % 3);
  const int n = 6 + static_cast<int>(rng() % 6);
  in.net = odcal::ActorCritic::orthogonal({obs_dim, {6, 5}, act_dim}, rng);
  for (Eigen::Index i = 0; i < in.net.parameter_count(); ++i) in.net.parameters()[i] += 0.3 * standard_normal(rng);
  in.config.clip_epsilon = 0.1 + 0.2 * uniform01(rng);
  in.config.value_coef = 0.25 + 0.75 * uniform01(rng);
  in.config.entropy_coef = 0.05 * uniform01(rng);

  odcal::RolloutBatch& b = in.batch;
  b.action_dim = act_dim;
  b.observations.resize(obs_dim, n);
  for (Eigen::Index i = 0; i < b.observations.size(); ++i) b.observations.data()[i] = standard_normal(rng);
  const double eps = in.config.clip_epsilon;
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd x = b.observations.col(j);
    const odcal::PolicyOutput out = in.net.forward(std::span<const double>(x.data(), static_cast<std::size_t>(obs_dim)));
    std::vector<std::uint8_t> a(static_cast<std::size_t>(act_dim));
    for (auto& bit : a) bit = uniform01(rng) < 0.5;
    b.actions.insert(b.actions.end(), a.begin(), a.end());
    const double logp = odcal::log_prob_and_entropy(std::span<const double>(out.logits.data(), a.size()), a).log_prob;
    double ratio = 1.0;
    do {
      ratio = std::exp(0.5 * standard_normal(rng));
    } while (std::abs(ratio - (1.0 - eps)) < margin || std::abs(ratio - (1.0 + eps)) < margin);
    b.log_prob_old.push_back(logp - std::log(ratio));
    b.values_old.push_back(out.value);
    b.rewards.push_back(0.0);
    b.dones.push_back(j + 1 == n);
    b.advantages.push_back(standard_normal(rng));
    b.returns.push_back(out.value + standard_normal(rng));
  }
  in.indices.resize(static_cast<std::size_t>(n));
  std::iota(in.indices.begin(), in.indices.end(), 0);
  return in;
}

/// Largest per-parameter relative difference between the analytic gradient and
/// central differences of the loss value; denominators are floored at `floor`.
inline double max_fd_relative_error(const LossInstance& in, double h = 1e-6, double floor = 1e-4) {
  const odcal::PpoLossAndGrad lg = odcal::ppo_loss(in.net, in.batch, in.indices, in.config);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < in.net.parameter_count(); ++i) {
    odcal::ActorCritic p = in.net, m = in.net;
    p.parameters()[i] += h;
    m.parameters()[i] -= h;
    const double fd = (odcal::ppo_loss_value(p, in.batch, in.indices, in.config) -
                       odcal::ppo_loss_value(m, in.batch, in.indices, in.config)) /
                      (2.0 * h);
    const double g = lg.gradient[i];
    worst = std::max(worst, std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), floor}));
  }
  return worst;
}

}  // namespace fixture
