#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "odcal/rng.hpp"

namespace odcal {

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MlpShape {
  int input_dim = 0;
  std::vector<int> hidden{64, 64};
  int action_dim = 0;

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

struct PolicyOutput {
  Eigen::VectorXd logits;
  double value = 0.0;
};

/// Shared-backbone actor-critic: tanh hidden layers, a linear actor head
/// producing one Bernoulli logit per OD pair and a linear critic head.
///
/// All parameters live in one flat vector (per layer: weight matrix in
/// column-major order, then bias), so optimizers and finite-difference checks
/// see a single contiguous buffer.
class ActorCritic {
 public:
  struct LayerView {
    Eigen::Index weight_offset = 0;
    Eigen::Index bias_offset = 0;
    int rows = 0;  // outputs
    int cols = 0;  // inputs
  };

  /// Activations retained by forward_batch for backward.
  struct Cache {
    Eigen::MatrixXd input;                    // input_dim x B
    std::vector<Eigen::MatrixXd> activations; // per hidden layer, width x B (post-tanh)
    Eigen::MatrixXd logits;                   // action_dim x B
    Eigen::RowVectorXd values;                // 1 x B
  };

  /// All-zero parameters.
  explicit ActorCritic(MlpShape shape);

  /// Orthogonal weights (gain sqrt(2) hidden, 0.01 actor head, 1 critic head), zero biases.
  static ActorCritic orthogonal(MlpShape shape, Rng& rng);

  const MlpShape& shape() const noexcept { return shape_; }
  Eigen::VectorXd& parameters() noexcept { return params_; }
  const Eigen::VectorXd& parameters() const noexcept { return params_; }
  Eigen::Index parameter_count() const noexcept { return params_.size(); }

  /// Hidden layers 0..H-1, then actor head (index H), then critic head (H+1).
  const std::vector<LayerView>& layers() const noexcept { return layers_; }
  std::size_t actor_head() const noexcept { return layers_.size() - 2; }
  std::size_t critic_head() const noexcept { return layers_.size() - 1; }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  PolicyOutput forward(std::span<const double> observation) const;
  Cache forward_batch(const Eigen::MatrixXd& inputs) const;

  /// Exact gradient of a scalar loss given its partial derivatives with
  /// respect to the cached logits (action_dim x B) and values (1 x B).
  Eigen::VectorXd backward(const Cache& cache, const Eigen::MatrixXd& dlogits,
                           const Eigen::RowVectorXd& dvalues) const;

  /// Versioned binary checkpoint with shape metadata; reload is bit-exact.
  void save(const std::filesystem::path& path) const;
  static ActorCritic load(const std::filesystem::path& path);

 private:
  MlpShape shape_;
  std::vector<LayerView> layers_;
  Eigen::VectorXd params_;
};

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index parameter_count, AdamConfig config = {});

  void update(Eigen::VectorXd& params, const Eigen::VectorXd& grads);

  const AdamConfig& config() const noexcept { return config_; }
  long step_count() const noexcept { return step_; }
  const Eigen::VectorXd& first_moment() const noexcept { return m_; }
  const Eigen::VectorXd& second_moment() const noexcept { return v_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long step_ = 0;
};

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// log p(bit | logit) of one Bernoulli component.
inline double bernoulli_log_prob(double logit, bool bit) { return bit ? -softplus(-logit) : -softplus(logit); }

struct SampledAction {
  std::vector<std::uint8_t> bits;
  double log_prob = 0.0;
};

/// bit_i = 1 iff draw_i < sigmoid(logit_i); components are independent.
SampledAction sample_action(std::span<const double> logits, std::span<const double> draws);

struct LogProbEntropy {
  double log_prob = 0.0;
  double entropy = 0.0;
};

LogProbEntropy log_prob_and_entropy(std::span<const double> logits, std::span<const std::uint8_t> action);

}  // namespace odcal
