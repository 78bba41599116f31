#include "odcal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "odcal/rng.hpp"

namespace odcal {

std::vector<double> replicate_true_demand(const EnvConfig& config, const Trajectory& truth,
                                          std::span<const std::uint64_t> seeds) {
  if (seeds.size() < 2) throw std::invalid_argument("replicate_true_demand needs at least two seeds");
  std::vector<double> errors;
  errors.reserve(seeds.size());
  for (std::uint64_t s : seeds) errors.push_back(evaluate_demand(config, truth, s).error);
  return errors;
}

DemandEncoding make_encoding(const EnvConfig& config, double interval_seconds, double c_max) {
  const double ratio = interval_seconds / config.input_interval;
  const int block = static_cast<int>(std::lround(ratio));
  if (block < 1 || std::abs(ratio - block) > 1e-9 || config.steps() % block != 0) {
    throw std::invalid_argument("decision interval must be a multiple of the input interval dividing the horizon");
  }
  if (block > 1 && (c_max < 0 || c_max > block)) throw std::invalid_argument("c_max must lie in [0, block steps]");
  return DemandEncoding{config.steps(), config.od_count(), block, c_max};
}

Trajectory decode_demand(const DemandEncoding& enc, const Eigen::VectorXd& x, std::uint64_t seed) {
  if (x.size() != enc.dimension()) throw std::invalid_argument("decision vector has the wrong dimension");
  Trajectory traj(enc.steps, enc.n_od);
  if (enc.count_mode()) {
    for (int b = 0; b < enc.blocks(); ++b) {
      for (int od = 0; od < enc.n_od; ++od) {
        const double v = std::clamp(x[enc.entry(b, od)], 0.0, 1.0);
        const int count = static_cast<int>(std::lround(v * enc.c_max));
        for (int j = 0; j < count; ++j) {
          const int offset = static_cast<int>(std::floor((j + 0.5) * enc.block_steps / count));
          traj.at(b * enc.block_steps + offset, od) = 1;
        }
      }
    }
    return traj;
  }
  Rng rng(seed);
  for (int t = 0; t < enc.steps; ++t) {
    for (int od = 0; od < enc.n_od; ++od) traj.at(t, od) = uniform01(rng) < x[enc.entry(t, od)] ? 1 : 0;
  }
  return traj;
}

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpConfig& config) {
  const double l2 = config.length_scale * config.length_scale;
  return config.signal_variance * std::exp(-(a - b).squaredNorm() / (2.0 * l2));
}

namespace {

/// Cross-covariance between the columns of A and B.
Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GpConfig& config) {
  const Eigen::VectorXd an = A.colwise().squaredNorm().transpose();
  const Eigen::RowVectorXd bn = B.colwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * (A.transpose() * B);
  d2.colwise() += an;
  d2.rowwise() += bn;
  const double inv = 1.0 / (2.0 * config.length_scale * config.length_scale);
  return (config.signal_variance * (-(d2.array().max(0.0)) * inv).exp()).matrix();
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

GpModel gp_fit(const Eigen::MatrixXd& X, std::span<const double> y, const GpConfig& config) {
  if (X.cols() < 1 || static_cast<std::size_t>(X.cols()) != y.size()) {
    throw std::invalid_argument("gp_fit needs as many targets as inputs, at least one");
  }
  GpModel m;
  m.config = config;
  m.X = X;
  const Eigen::Map<const Eigen::VectorXd> raw(y.data(), static_cast<Eigen::Index>(y.size()));
  m.y_mean = raw.mean();
  const double var = (raw.array() - m.y_mean).square().mean();
  m.y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  m.y = (raw.array() - m.y_mean) / m.y_scale;

  const Eigen::MatrixXd K = cross_kernel(X, X, config);
  const Eigen::Index n = K.rows();
  double noise = config.noise_variance;
  for (;;) {
    m.chol.compute(K + noise * Eigen::MatrixXd::Identity(n, n));
    if (m.chol.info() == Eigen::Success) break;
    noise = std::max(noise, 1e-10) * 10.0;
    if (noise > config.max_jitter) throw IllConditioned("GP kernel matrix not positive definite after jitter");
  }
  m.noise = noise;
  m.alpha = m.chol.solve(m.y);
  return m;
}

std::vector<Posterior> gp_posterior(const GpModel& model, const Eigen::MatrixXd& candidates) {
  const Eigen::MatrixXd Ks = cross_kernel(model.X, candidates, model.config);
  const Eigen::VectorXd mean = Ks.transpose() * model.alpha;
  const Eigen::MatrixXd V = model.chol.matrixL().solve(Ks);
  const Eigen::VectorXd reduction = V.colwise().squaredNorm().transpose();
  std::vector<Posterior> out(static_cast<std::size_t>(candidates.cols()));
  for (Eigen::Index j = 0; j < candidates.cols(); ++j) {
    out[static_cast<std::size_t>(j)] = {mean[j], std::max(0.0, model.config.signal_variance - reduction[j])};
  }
  return out;
}

Posterior gp_posterior(const GpModel& model, const Eigen::VectorXd& x) {
  return gp_posterior(model, Eigen::MatrixXd(x)).front();
}

double expected_improvement(const Posterior& p, double best_y) {
  const double sigma = std::sqrt(p.variance);
  const double gain = best_y - p.mean;
  if (!(sigma > 0.0)) return std::max(0.0, gain);
  const double z = gain / sigma;
  return std::max(0.0, gain * normal_cdf(z) + sigma * normal_pdf(z));
}

double expected_improvement(const GpModel& model, const Eigen::VectorXd& x, double best_y, Eigen::VectorXd& grad) {
  const Eigen::VectorXd k = cross_kernel(model.X, Eigen::MatrixXd(x), model.config).col(0);
  const Eigen::VectorXd w = model.chol.solve(k);
  const Posterior p{k.dot(model.alpha), std::max(0.0, model.config.signal_variance - k.dot(w))};
  grad = Eigen::VectorXd::Zero(x.size());
  const double ei = expected_improvement(p, best_y);
  const double sigma = std::sqrt(p.variance);
  if (!(sigma > 1e-12)) return ei;
  // d k_i / d x = -k_i (x - x_i) / l^2
  const double inv_l2 = 1.0 / (model.config.length_scale * model.config.length_scale);
  const auto directional = [&](const Eigen::VectorXd& c) -> Eigen::VectorXd {
    const Eigen::VectorXd ck = c.cwiseProduct(k);
    return -inv_l2 * (ck.sum() * x - model.X * ck);
  };
  const Eigen::VectorXd d_mean = directional(model.alpha);
  const Eigen::VectorXd d_sigma = -directional(w) / sigma;
  const double z = (best_y - p.mean) / sigma;
  grad = -normal_cdf(z) * d_mean + normal_pdf(z) * d_sigma;
  return ei;
}

void BoConfig::validate() const {
  if (iterations <= 0) throw std::invalid_argument("BO iterations must be positive");
  if (initial_samples < 1) throw std::invalid_argument("BO needs at least one initial sample");
  if (!(gp.length_scale > 0) || !(gp.signal_variance > 0) || !(gp.noise_variance > 0)) {
    throw std::invalid_argument("GP hyperparameters must be positive");
  }
  if (candidates < 1 || local_candidates < 0) throw std::invalid_argument("invalid acquisition candidate counts");
  if (refine_starts < 0 || refine_steps < 0) throw std::invalid_argument("invalid acquisition refinement counts");
  if (!(input_interval > 0)) throw std::invalid_argument("BO input interval must be positive");
}

std::string method_name(const BoConfig& config) {
  std::string name = config.mode == BoMode::Simultaneous ? "ST-BO" : "SQ-BO";
  const double s = config.input_interval;
  if (s >= 60.0 && std::fmod(s, 60.0) == 0.0) return name + "(" + std::to_string(static_cast<int>(s / 60)) + "min)";
  return name + "(" + std::to_string(static_cast<int>(s)) + "s)";
}

namespace {

std::uint64_t hash_vector(const Eigen::VectorXd& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(x.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(x.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform candidates followed by sparse clipped Gaussian moves around `incumbent`.
Eigen::MatrixXd acquisition_candidates(const BoConfig& config, const Eigen::VectorXd& incumbent, Rng& rng) {
  static constexpr double kScales[] = {0.02, 0.05, 0.1, 0.2, 0.5};
  const Eigen::Index dim = incumbent.size();
  Eigen::MatrixXd C(dim, config.candidates + config.local_candidates);
  for (Eigen::Index j = 0; j < config.candidates; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) C(i, j) = uniform01(rng);
  }
  int max_level = 0;
  while ((Eigen::Index{1} << max_level) < dim) ++max_level;
  for (int j = 0; j < config.local_candidates; ++j) {
    const double scale = kScales[j % 5];
    const double touched = static_cast<double>(Eigen::Index{1} << ((j / 5) % (max_level + 1)));
    const double p = std::min(1.0, touched / static_cast<double>(dim));
    Eigen::VectorXd x = incumbent;
    bool moved = false;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (uniform01(rng) < p) {
        x[i] = std::clamp(x[i] + scale * standard_normal(rng), 0.0, 1.0);
        moved = true;
      }
    }
    if (!moved) {
      const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(dim));
      x[i] = std::clamp(x[i] + scale * standard_normal(rng), 0.0, 1.0);
    }
    C.col(config.candidates + j) = x;
  }
  return C;
}

/// Projected gradient ascent of EI inside the unit cube with halving step search.
Eigen::VectorXd refine_candidate(const GpModel& gp, Eigen::VectorXd x, double best_y, int steps, double& ei) {
  Eigen::VectorXd grad, trial_grad;
  ei = expected_improvement(gp, x, best_y, grad);
  for (int s = 0; s < steps; ++s) {
    const double g = grad.cwiseAbs().maxCoeff();
    if (!(g > 0.0)) break;
    bool moved = false;
    for (double t = 0.5 / g; t * g > 1e-4; t *= 0.5) {
      const Eigen::VectorXd trial = (x + t * grad).cwiseMax(0.0).cwiseMin(1.0);
      const double e = expected_improvement(gp, trial, best_y, trial_grad);
      if (e > ei) {
        x = trial;
        ei = e;
        grad = trial_grad;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  return x;
}

struct Stage {
  int first_entry = 0;  // first decision-vector entry optimized in this stage
  int size = 0;
  int interval = -1;    // objective row; -1 for the full-horizon error
  int budget = 0;
};

}  // namespace

CalibrationResult bo_calibrate(const BoConfig& config, const EnvConfig& env_config, std::uint64_t seed,
                               const BoProgress& progress) {
  config.validate();
  env_config.validate();
  const DemandEncoding enc = make_encoding(env_config, config.input_interval, config.c_max);
  const std::uint64_t decode_seed = derive_seed(seed, "decode");
  Rng rng(derive_seed(seed, "bo/search"));

  std::vector<Stage> stages;
  if (config.mode == BoMode::Simultaneous) {
    stages.push_back({0, enc.dimension(), -1, config.iterations});
  } else {
    const int K = env_config.intervals();
    if (env_config.steps_per_interval() % enc.block_steps != 0) {
      throw std::invalid_argument("sequential BO needs decision blocks nested in aggregation intervals");
    }
    if (config.iterations < K) throw std::invalid_argument("sequential BO needs at least one evaluation per interval");
    const int per = env_config.steps_per_interval() / enc.block_steps * enc.n_od;
    for (int k = 0; k < K; ++k) {
      stages.push_back({k * per, per, k, config.iterations / K + (k < config.iterations % K ? 1 : 0)});
    }
  }

  CalibrationResult result;
  Eigen::VectorXd frozen = Eigen::VectorXd::Zero(enc.dimension());
  int evaluation = 0;
  for (const Stage& stage : stages) {
    GpConfig gp_config = config.gp;
    if (config.scale_length) gp_config.length_scale *= std::sqrt(static_cast<double>(stage.size));
    Eigen::MatrixXd X(stage.size, 0);
    std::vector<double> y;
    Eigen::VectorXd best_x;
    double best_y = std::numeric_limits<double>::infinity();
    for (int it = 0; it < stage.budget; ++it) {
      Eigen::VectorXd x(stage.size);
      if (it < config.initial_samples) {
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = uniform01(rng);
      } else {
        const GpModel gp = gp_fit(X, y, gp_config);
        const Eigen::MatrixXd C = acquisition_candidates(config, best_x, rng);
        const std::vector<Posterior> post = gp_posterior(gp, C);
        const double incumbent = gp.standardize(best_y);
        std::vector<double> ei(post.size());
        for (std::size_t j = 0; j < post.size(); ++j) ei[j] = expected_improvement(post[j], incumbent);
        std::vector<Eigen::Index> order(post.size());
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        const auto starts = std::min<std::size_t>(static_cast<std::size_t>(std::max(config.refine_starts, 1)), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(starts), order.end(),
                          [&](Eigen::Index a, Eigen::Index b) { return ei[static_cast<std::size_t>(a)] > ei[static_cast<std::size_t>(b)]; });
        x = C.col(order[0]);
        double best_ei = ei[static_cast<std::size_t>(order[0])];
        for (std::size_t s = 0; s < starts && config.refine_steps > 0 && config.refine_starts > 0; ++s) {
          double refined_ei = 0.0;
          Eigen::VectorXd r = refine_candidate(gp, C.col(order[s]), incumbent, config.refine_steps, refined_ei);
          if (refined_ei > best_ei) {
            best_ei = refined_ei;
            x = std::move(r);
          }
        }
      }

      Eigen::VectorXd full = frozen;
      full.segment(stage.first_entry, stage.size) = x;
      const Trajectory traj = decode_demand(enc, full, decode_seed);
      const std::uint64_t sim_seed = derive_seed(seed, "bo/eval" + std::to_string(evaluation));
      const DemandEvaluation ev = evaluate_demand(env_config, traj, sim_seed);
      const double objective =
          stage.interval < 0 ? ev.error : ev.interval_errors[static_cast<std::size_t>(stage.interval)];

      X.conservativeResize(Eigen::NoChange, X.cols() + 1);
      X.col(X.cols() - 1) = x;
      const double modeled = config.log_objective ? std::log1p(objective) : objective;
      y.push_back(modeled);
      if (modeled < best_y) {
        best_y = modeled;
        best_x = x;
      }

      result.offer(ev.error, traj, ev.simulated, sim_seed, evaluation);
      EvaluationRecord rec;
      rec.index = evaluation;
      rec.error = ev.error;
      rec.incumbent = result.best_error;
      rec.tag = hash_vector(full);
      result.history.push_back(rec);
      ++evaluation;
      if (progress && !progress(result)) return result;
    }
    frozen.segment(stage.first_entry, stage.size) = best_x;
  }
  return result;
}

}  // namespace odcal
