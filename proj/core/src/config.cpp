#include "odcal/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace odcal {

namespace {

/// Strict view of one JSON object: every key must be consumed.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& target) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      target = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  std::optional<Section> sub(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    used_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.contains(k)) throw ConfigError("unknown key " + path_ + "." + k);
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <class F>
void check(F&& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.raw = doc;
  c.env = default_env_config();
  Section root(doc, "config");
  root.get("seed", c.seed);
  std::string out;
  root.get("out", out);
  if (!out.empty()) c.out = resolve(base_dir, out);

  if (auto net = root.sub("network")) {
    net->get("source", c.network_source);
    net->get("scale", c.network_scale);
    std::string file;
    net->get("path", file);
    if (!file.empty()) c.network_file = resolve(base_dir, file);
    net->finish();
  }
  if (c.network_source == "builtin") {
    if (!(c.network_scale > 0)) throw ConfigError("network.scale must be positive");
    c.env.network = std::make_shared<const NetworkSpec>(build_nguyen_dupuis(c.network_scale));
  } else if (c.network_source == "file") {
    if (!c.network_file) throw ConfigError("network.path is required for source \"file\"");
    if (!std::filesystem::exists(*c.network_file)) throw MissingInput("network file " + c.network_file->string());
    try {
      c.env.network = std::make_shared<const NetworkSpec>(load_network(*c.network_file));
    } catch (const NetworkError& e) {
      throw ConfigError(std::string("network file: ") + e.what());
    }
  } else {
    throw ConfigError("network.source must be \"builtin\" or \"file\"");
  }

  if (auto env = root.sub("env")) {
    env->get("input_interval", c.env.input_interval);
    env->get("output_interval", c.env.output_interval);
    env->get("horizon", c.env.horizon);
    env->get("sim_dt", c.env.sim_dt);
    env->get("gamma", c.env.gamma);
    env->get("check_invariants", c.env.check_invariants);
    if (auto cf = env->sub("car_following")) {
      CarFollowingParams& p = c.env.car_following;
      cf->get("accel", p.accel);
      cf->get("decel", p.decel);
      cf->get("tau", p.tau);
      cf->get("sigma", p.sigma);
      cf->get("min_gap", p.min_gap);
      cf->get("vehicle_length", p.vehicle_length);
      cf->get("speed_dev", p.speed_dev);
      cf->get("speed_factor_max", p.speed_factor_max);
      cf->finish();
    }
    env->finish();
  }
  c.env.ground_truth = CountTable(1, 1);
  check([&] {
    c.env.car_following.validate();
    c.env.ground_truth = CountTable(c.env.intervals(), c.env.detector_count());
    c.env.validate();
  });

  if (auto truth = root.sub("truth")) {
    truth->get("total_vehicles", c.truth.total_vehicles);
    std::string table, traj;
    truth->get("table", table);
    truth->get("trajectory", traj);
    if (!table.empty()) c.truth.table = resolve(base_dir, table);
    if (!traj.empty()) c.truth.trajectory = resolve(base_dir, traj);
    truth->finish();
  }
  const long long cells = static_cast<long long>(c.env.steps()) * c.env.od_count();
  if (c.truth.total_vehicles < 0 || c.truth.total_vehicles > cells) {
    throw ConfigError("truth.total_vehicles must lie in [0, T * n_od]");
  }

  if (auto ppo = root.sub("ppo")) {
    PpoConfig& p = c.ppo;
    ppo->get("clip_epsilon", p.clip_epsilon);
    ppo->get("value_coef", p.value_coef);
    ppo->get("entropy_coef", p.entropy_coef);
    ppo->get("gae_lambda", p.gae_lambda);
    ppo->get("gamma", p.gamma);
    ppo->get("epochs", p.epochs);
    ppo->get("minibatch_size", p.minibatch_size);
    ppo->get("parallel_envs", p.parallel_envs);
    ppo->get("total_episodes", p.total_episodes);
    ppo->get("max_grad_norm", p.max_grad_norm);
    ppo->get("learning_rate", p.adam.learning_rate);
    ppo->get("adam_beta1", p.adam.beta1);
    ppo->get("adam_beta2", p.adam.beta2);
    ppo->get("adam_epsilon", p.adam.epsilon);
    ppo->get("hidden", p.hidden);
    ppo->get("reward_scale", p.reward_scale);
    ppo->get("scale_observations", p.scale_observations);
    ppo->finish();
  }
  check([&] { c.ppo.validate(); });

  if (auto bo = root.sub("bo")) {
    BoConfig& b = c.bo;
    std::string mode;
    bo->get("mode", mode);
    if (mode == "simultaneous") b.mode = BoMode::Simultaneous;
    else if (mode == "sequential") b.mode = BoMode::Sequential;
    else if (!mode.empty()) throw ConfigError("bo.mode must be \"simultaneous\" or \"sequential\"");
    bo->get("input_interval", b.input_interval);
    bo->get("iterations", b.iterations);
    bo->get("initial_samples", b.initial_samples);
    bo->get("length_scale", b.gp.length_scale);
    bo->get("signal_variance", b.gp.signal_variance);
    bo->get("noise_variance", b.gp.noise_variance);
    bo->get("max_jitter", b.gp.max_jitter);
    bo->get("candidates", b.candidates);
    bo->get("local_candidates", b.local_candidates);
    bo->get("refine_starts", b.refine_starts);
    bo->get("refine_steps", b.refine_steps);
    bo->get("log_objective", b.log_objective);
    bo->get("scale_length", b.scale_length);
    bo->get("c_max", b.c_max);
    bo->finish();
  }
  check([&] {
    c.bo.validate();
    make_encoding(c.env, c.bo.input_interval, c.bo.c_max);
  });

  if (auto plan = root.sub("plan")) {
    plan->get("methods", c.plan.methods);
    plan->get("repetitions", c.plan.repetitions);
    plan->get("budget", c.plan.budget);
    plan->get("alpha", c.plan.alpha);
    plan->finish();
  }
  if (c.plan.repetitions < 1) throw ConfigError("plan.repetitions must be positive");
  if (c.plan.budget < 1) throw ConfigError("plan.budget must be positive");
  if (!(c.plan.alpha > 0 && c.plan.alpha < 1)) throw ConfigError("plan.alpha must lie in (0, 1)");

  if (auto ev = root.sub("evaluate")) {
    std::string traj;
    ev->get("trajectory", traj);
    if (!traj.empty()) c.evaluate.trajectory = resolve(base_dir, traj);
    std::uint64_t seed = 0;
    if (doc.at("evaluate").contains("sim_seed")) {
      ev->get("sim_seed", seed);
      c.evaluate.sim_seed = seed;
    }
    ev->finish();
  }
  root.finish();
  resolve_methods(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

std::vector<MethodSpec> resolve_methods(const RunConfig& config) {
  std::vector<MethodSpec> roster = default_roster(config.env.input_interval);
  for (MethodSpec& m : roster) {
    if (m.kind != MethodKind::Bo) continue;
    const BoConfig shape = m.bo;
    m.bo = config.bo;
    m.bo.mode = shape.mode;
    m.bo.input_interval = shape.input_interval;
  }
  if (config.plan.methods.empty()) return roster;
  std::vector<MethodSpec> chosen;
  for (const std::string& name : config.plan.methods) {
    auto it = std::find_if(roster.begin(), roster.end(), [&](const MethodSpec& m) { return m.name == name; });
    if (it == roster.end()) throw ConfigError("unknown method " + name);
    chosen.push_back(*it);
  }
  return chosen;
}

}  // namespace odcal
