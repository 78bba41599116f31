#include "odcal/neural.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace odcal {

namespace {

constexpr std::array<char, 8> kCheckpointMagic{'O', 'D', 'C', 'A', 'L', 'N', 'N', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

ActorCritic::ActorCritic(MlpShape shape) : shape_(std::move(shape)) {
  if (shape_.input_dim <= 0 || shape_.action_dim <= 0) throw ShapeMismatch("network dimensions must be positive");
  Eigen::Index offset = 0;
  int prev = shape_.input_dim;
  const auto add = [&](int rows, int cols) {
    LayerView v;
    v.rows = rows;
    v.cols = cols;
    v.weight_offset = offset;
    offset += static_cast<Eigen::Index>(rows) * cols;
    v.bias_offset = offset;
    offset += rows;
    layers_.push_back(v);
  };
  for (int width : shape_.hidden) {
    if (width <= 0) throw ShapeMismatch("hidden widths must be positive");
    add(width, prev);
    prev = width;
  }
  add(shape_.action_dim, prev);
  add(1, prev);
  params_ = Eigen::VectorXd::Zero(offset);
}

ActorCritic ActorCritic::orthogonal(MlpShape shape, Rng& rng) {
  ActorCritic net(std::move(shape));
  for (std::size_t li = 0; li < net.layers_.size(); ++li) {
    const LayerView& l = net.layers_[li];
    const double gain = li == net.actor_head() ? 0.01 : li == net.critic_head() ? 1.0 : std::sqrt(2.0);
    const int big = std::max(l.rows, l.cols);
    const int small = std::min(l.rows, l.cols);
    Eigen::MatrixXd g(big, small);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = standard_normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (int j = 0; j < small; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    Eigen::Map<Eigen::MatrixXd> w(net.params_.data() + l.weight_offset, l.rows, l.cols);
    w = gain * (l.rows >= l.cols ? q : Eigen::MatrixXd(q.transpose()));
  }
  return net;
}

Eigen::Map<const Eigen::MatrixXd> ActorCritic::weight(std::size_t layer) const {
  const LayerView& l = layers_.at(layer);
  return {params_.data() + l.weight_offset, l.rows, l.cols};
}

Eigen::Map<const Eigen::VectorXd> ActorCritic::bias(std::size_t layer) const {
  const LayerView& l = layers_.at(layer);
  return {params_.data() + l.bias_offset, l.rows};
}

PolicyOutput ActorCritic::forward(std::span<const double> observation) const {
  if (static_cast<int>(observation.size()) != shape_.input_dim) {
    throw ShapeMismatch("observation has dimension " + std::to_string(observation.size()) + ", network expects " +
                        std::to_string(shape_.input_dim));
  }
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(observation.data(), shape_.input_dim);
  for (std::size_t li = 0; li < actor_head(); ++li) h = (weight(li) * h + bias(li)).array().tanh().matrix();
  PolicyOutput out;
  out.logits = weight(actor_head()) * h + bias(actor_head());
  out.value = (weight(critic_head()) * h + bias(critic_head()))(0);
  return out;
}

ActorCritic::Cache ActorCritic::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != shape_.input_dim) throw ShapeMismatch("batch input rows must equal input_dim");
  Cache c;
  c.input = inputs;
  const Eigen::MatrixXd* prev = &c.input;
  c.activations.reserve(actor_head());
  for (std::size_t li = 0; li < actor_head(); ++li) {
    Eigen::MatrixXd z = weight(li) * *prev;
    z.colwise() += bias(li);
    c.activations.push_back(z.array().tanh().matrix());
    prev = &c.activations.back();
  }
  c.logits = weight(actor_head()) * *prev;
  c.logits.colwise() += bias(actor_head());
  c.values = (weight(critic_head()) * *prev).row(0).array() + bias(critic_head())(0);
  return c;
}

Eigen::VectorXd ActorCritic::backward(const Cache& cache, const Eigen::MatrixXd& dlogits,
                                      const Eigen::RowVectorXd& dvalues) const {
  const Eigen::Index batch = cache.input.cols();
  if (dlogits.rows() != shape_.action_dim || dlogits.cols() != batch || dvalues.cols() != batch) {
    throw ShapeMismatch("gradient seeds do not match the cached batch");
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  const auto gw = [&](std::size_t li) {
    const LayerView& l = layers_[li];
    return Eigen::Map<Eigen::MatrixXd>(grad.data() + l.weight_offset, l.rows, l.cols);
  };
  const auto gb = [&](std::size_t li) {
    const LayerView& l = layers_[li];
    return Eigen::Map<Eigen::VectorXd>(grad.data() + l.bias_offset, l.rows);
  };

  const Eigen::MatrixXd& top = cache.activations.empty() ? cache.input : cache.activations.back();
  gw(actor_head()).noalias() = dlogits * top.transpose();
  gb(actor_head()) = dlogits.rowwise().sum();
  gw(critic_head()).noalias() = dvalues * top.transpose();
  gb(critic_head())(0) = dvalues.sum();

  Eigen::MatrixXd dh = weight(actor_head()).transpose() * dlogits;
  dh.noalias() += weight(critic_head()).transpose() * dvalues;
  for (std::size_t li = actor_head(); li-- > 0;) {
    const Eigen::MatrixXd& act = cache.activations[li];
    const Eigen::MatrixXd dz = (dh.array() * (1.0 - act.array().square())).matrix();
    const Eigen::MatrixXd& below = li == 0 ? cache.input : cache.activations[li - 1];
    gw(li).noalias() = dz * below.transpose();
    gb(li) = dz.rowwise().sum();
    if (li > 0) dh.noalias() = weight(li).transpose() * dz;
  }
  return grad;
}

void ActorCritic::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put(kCheckpointVersion);
  const auto dims = static_cast<std::uint32_t>(shape_.hidden.size() + 2);
  put(dims);
  put(static_cast<std::int32_t>(shape_.input_dim));
  for (int h : shape_.hidden) put(static_cast<std::int32_t>(h));
  put(static_cast<std::int32_t>(shape_.action_dim));
  put(static_cast<std::uint64_t>(params_.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * static_cast<Eigen::Index>(sizeof(double))));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ActorCritic ActorCritic::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  };
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw std::runtime_error("not an odcal checkpoint: " + path.string());
  std::uint32_t version = 0;
  get(version);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  std::uint32_t dims = 0;
  get(dims);
  if (dims < 2 || dims > 64) throw std::runtime_error("corrupt checkpoint shape");
  std::vector<std::int32_t> sizes(dims);
  for (auto& s : sizes) get(s);
  MlpShape shape;
  shape.input_dim = sizes.front();
  shape.action_dim = sizes.back();
  shape.hidden.assign(sizes.begin() + 1, sizes.end() - 1);
  ActorCritic net(shape);
  std::uint64_t count = 0;
  get(count);
  if (count != static_cast<std::uint64_t>(net.params_.size())) throw ShapeMismatch("checkpoint parameter count");
  in.read(reinterpret_cast<char*>(net.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  return net;
}

Adam::Adam(Eigen::Index parameter_count, AdamConfig config)
    : config_(config),
      m_(Eigen::VectorXd::Zero(parameter_count)),
      v_(Eigen::VectorXd::Zero(parameter_count)) {}

void Adam::update(Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeMismatch("Adam shape mismatch");
  ++step_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grads;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

SampledAction sample_action(std::span<const double> logits, std::span<const double> draws) {
  if (logits.size() != draws.size()) throw ShapeMismatch("one uniform draw per component is required");
  SampledAction out;
  out.bits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const bool bit = draws[i] < sigmoid(logits[i]);
    out.bits[i] = bit ? 1 : 0;
    out.log_prob += bernoulli_log_prob(logits[i], bit);
  }
  return out;
}

LogProbEntropy log_prob_and_entropy(std::span<const double> logits, std::span<const std::uint8_t> action) {
  if (logits.size() != action.size()) throw ShapeMismatch("action length must match logits");
  LogProbEntropy out;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (action[i] > 1) throw std::invalid_argument("action entries must be 0 or 1");
    const double x = logits[i];
    const double p = sigmoid(x);
    const double log_p1 = -softplus(-x);
    const double log_p0 = -softplus(x);
    out.log_prob += action[i] ? log_p1 : log_p0;
    out.entropy += -p * log_p1 - (1.0 - p) * log_p0;
  }
  return out;
}

}  // namespace odcal
