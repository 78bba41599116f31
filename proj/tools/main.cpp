// odcal: command-line front end for ground-truth generation, PPO and BO
// calibration, multi-method plans and report export.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "odcal/baselines.hpp"
#include "odcal/config.hpp"
#include "odcal/experiments.hpp"
#include "odcal/ppo.hpp"
#include "odcal/rng.hpp"
#include "odcal/stats.hpp"

namespace fs = std::filesystem;
using namespace odcal;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kMissingInput = 3,
  kNonFinite = 4,
  kSimulatorAssertion = 5,
  kUsage = 64,
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

struct Context {
  RunConfig cfg;
  fs::path out;
};

Context load(const Options& opt) {
  Context ctx;
  ctx.cfg = opt.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(opt.config);
  if (opt.seed) ctx.cfg.seed = *opt.seed;
  ctx.out = opt.out.empty() ? ctx.cfg.out : fs::path(opt.out);
  if (opt.jobs < 1) throw ConfigError("--jobs must be positive");
  return ctx;
}

/// Copies the config next to the outputs so every run directory is self-describing.
void echo_config(const Options& opt, const Context& ctx, const std::string& command) {
  fs::create_directories(ctx.out);
  if (!opt.config.empty()) {
    fs::copy_file(opt.config, ctx.out / "config.json", fs::copy_options::overwrite_existing);
  } else {
    std::ofstream(ctx.out / "config.json") << ctx.cfg.raw.dump(2) << '\n';
  }
  std::ofstream run(ctx.out / "run.txt");
  run << "command " << command << '\n' << "seed " << ctx.cfg.seed << '\n';
}

std::uint64_t truth_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "truth"); }

/// Ground truth from the configured files, or generated from the seed when none are given.
TrueDemand resolve_truth(const RunConfig& cfg, bool need_trajectory) {
  if (!cfg.truth.table) {
    if (cfg.truth.trajectory) throw ConfigError("truth.trajectory requires truth.table");
    return generate_true_demand(cfg.truth.total_vehicles, cfg.env, truth_seed(cfg));
  }
  TrueDemand t;
  if (!fs::exists(*cfg.truth.table)) throw MissingInput("truth table " + cfg.truth.table->string());
  t.table = read_count_table(*cfg.truth.table);
  if (t.table.rows() != cfg.env.intervals() || t.table.cols() != cfg.env.detector_count()) {
    throw ConfigError("truth table shape does not match the environment");
  }
  if (cfg.truth.trajectory) {
    if (!fs::exists(*cfg.truth.trajectory)) throw MissingInput("truth trajectory " + cfg.truth.trajectory->string());
    t.trajectory = read_trajectory(*cfg.truth.trajectory);
    if (t.trajectory.steps() != cfg.env.steps() || t.trajectory.od_count() != cfg.env.od_count()) {
      throw ConfigError("truth trajectory shape does not match the environment");
    }
    t.realized = t.trajectory.departures();
  } else if (need_trajectory) {
    throw MissingInput("this command needs truth.trajectory alongside truth.table");
  }
  return t;
}

void print_table_summary(const CountTable& table) {
  std::cout << "truth table " << table.rows() << " x " << table.cols() << ", total count " << table.total() << '\n';
}

int cmd_gen_truth(const Options& opt) {
  Context ctx = load(opt);
  if (ctx.cfg.truth.total_vehicles == 0) std::cerr << "warning: total_vehicles is 0, the ground truth is all zeros\n";
  const TrueDemand t = generate_true_demand(ctx.cfg.truth.total_vehicles, ctx.cfg.env, truth_seed(ctx.cfg));
  echo_config(opt, ctx, "gen-truth");
  const std::vector<int>& links = ctx.cfg.env.network->detectors();
  write_trajectory(t.trajectory, ctx.out / "truth_trajectory.csv");
  write_count_table(t.table, links, ctx.out / "truth_table.csv");
  std::ofstream info(ctx.out / "truth.txt");
  info << "requested " << t.requested << '\n'
       << "realized " << t.realized << '\n'
       << "draws " << t.draws << '\n'
       << "sim_seed " << t.sim_seed << '\n';
  std::cout << "realized " << t.realized << " vehicles (requested " << t.requested << ", " << t.draws << " draw"
            << (t.draws == 1 ? "" : "s") << ")\n";
  print_table_summary(t.table);
  return kOk;
}

int cmd_train(const Options& opt) {
  Context ctx = load(opt);
  EnvConfig env = ctx.cfg.env;
  env.ground_truth = resolve_truth(ctx.cfg, false).table;
  echo_config(opt, ctx, "train");
  const int every = std::max(1, ctx.cfg.ppo.total_episodes / 20);
  int last = 0;
  const CalibrationResult result = train(env, ctx.cfg.ppo, derive_seed(ctx.cfg.seed, "train"), [&](const CalibrationResult& r) {
    if (r.evaluations() - last >= every || r.evaluations() == ctx.cfg.ppo.total_episodes) {
      last = r.evaluations();
      std::cerr << "episode " << r.evaluations() << "  error " << r.history.back().error << "  best " << r.best_error
                << '\n';
    }
    return true;
  });
  write_calibration_result(result, env.network->detectors(), ctx.out, "RL-PPO");
  std::cout << "best error " << result.best_error << " (episode " << result.best_index << ")\n";
  return kOk;
}

int cmd_baseline(const Options& opt) {
  Context ctx = load(opt);
  EnvConfig env = ctx.cfg.env;
  env.ground_truth = resolve_truth(ctx.cfg, false).table;
  echo_config(opt, ctx, "baseline");
  const std::string name = method_name(ctx.cfg.bo);
  const CalibrationResult result = bo_calibrate(ctx.cfg.bo, env, derive_seed(ctx.cfg.seed, "baseline"));
  write_calibration_result(result, env.network->detectors(), ctx.out, name);
  std::cout << name << " best error " << result.best_error << " (evaluation " << result.best_index << ")\n";
  return kOk;
}

int cmd_run_plan(const Options& opt) {
  Context ctx = load(opt);
  const TrueDemand truth = resolve_truth(ctx.cfg, true);
  ExperimentPlan plan;
  plan.env = ctx.cfg.env;
  plan.env.ground_truth = truth.table;
  plan.truth_trajectory = truth.trajectory;
  plan.truth_seed = truth.sim_seed;
  plan.methods = resolve_methods(ctx.cfg);
  plan.repetitions = ctx.cfg.plan.repetitions;
  plan.budget = ctx.cfg.plan.budget;
  plan.ppo = ctx.cfg.ppo;
  plan.seed = ctx.cfg.seed;
  plan.jobs = opt.jobs;
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  echo_config(opt, ctx, "run-plan");
  const PlanResult result = run_plan(plan, [](const std::string& method, int rep, const RepetitionResult& r) {
    std::cerr << method << " rep " << rep << ": ";
    if (r.failed) std::cerr << "FAILED " << r.message << '\n';
    else std::cerr << "best error " << r.best_error() << ", eval error " << r.eval_error << '\n';
  });
  write_plan_results(result, plan, ctx.out, ctx.cfg.plan.alpha);
  std::cout << std::ifstream(ctx.out / "summary.txt").rdbuf();
  for (const MethodResult& m : result.methods) {
    for (const RepetitionResult& r : m.reps) {
      if (r.failure == FailureKind::NonFinite) return kNonFinite;
      if (r.failure == FailureKind::Simulator) return kSimulatorAssertion;
      if (r.failed) return kFailure;
    }
  }
  return kOk;
}

int cmd_evaluate(const Options& opt) {
  Context ctx = load(opt);
  const TrueDemand truth = resolve_truth(ctx.cfg, ctx.cfg.evaluate.trajectory == std::nullopt);
  EnvConfig env = ctx.cfg.env;
  env.ground_truth = truth.table;
  Trajectory traj = truth.trajectory;
  if (ctx.cfg.evaluate.trajectory) {
    if (!fs::exists(*ctx.cfg.evaluate.trajectory)) {
      throw MissingInput("trajectory " + ctx.cfg.evaluate.trajectory->string());
    }
    traj = read_trajectory(*ctx.cfg.evaluate.trajectory);
    if (traj.steps() != env.steps() || traj.od_count() != env.od_count()) {
      throw ConfigError("evaluated trajectory shape does not match the environment");
    }
  }
  std::uint64_t seed = truth.sim_seed;
  if (ctx.cfg.evaluate.sim_seed) seed = *ctx.cfg.evaluate.sim_seed;
  else if (ctx.cfg.truth.table) throw ConfigError("evaluate.sim_seed is required when the truth is read from files");
  echo_config(opt, ctx, "evaluate");

  const DemandEvaluation ev = evaluate_demand(env, traj, seed);
  const std::vector<int>& links = env.network->detectors();
  write_count_table(ev.simulated, links, ctx.out / "table.csv");
  std::ofstream info(ctx.out / "evaluation.txt");
  info << std::setprecision(10) << "sim_seed " << seed << '\n' << "error " << ev.error << '\n';
  for (std::size_t k = 0; k < ev.interval_errors.size(); ++k) info << "interval_error " << k + 1 << ' ' << ev.interval_errors[k] << '\n';

  const MetricsReport m = compute_metrics(ev.simulated, env.ground_truth);
  std::ofstream metrics(ctx.out / "metrics.csv");
  metrics << std::setprecision(10) << "mse,rmse,mae,mape_pct,sde,p95_ae,max_ae,mbe,r2,degenerate_truth\n"
          << m.mse << ',' << m.rmse << ',' << m.mae << ',' << m.mape_pct << ',' << m.sde << ',' << m.p95_ae << ','
          << m.max_ae << ',' << m.mbe << ',' << m.r2 << ',' << (m.degenerate_truth ? 1 : 0) << '\n';
  std::ofstream sig(ctx.out / "significance.csv");
  sig << std::setprecision(10) << "detector_link,branch,statistic,p_value,n,normality_p,flag\n";
  const std::vector<TestOutcome> tests = significance_pipeline(ev.simulated, env.ground_truth, ctx.cfg.plan.alpha);
  for (std::size_t d = 0; d < tests.size(); ++d) {
    const TestOutcome& t = tests[d];
    sig << links[d] << ',' << to_string(t.test) << ',' << t.statistic << ',' << t.p_value << ',' << t.n << ','
        << t.normality_p << ',' << to_string(t.flag) << '\n';
  }
  std::cout << "error " << ev.error << '\n';
  return kOk;
}

int cmd_report(const Options& opt) {
  Context ctx = load(opt);
  if (!fs::exists(ctx.out / "plan.txt")) throw MissingInput("no plan results in " + ctx.out.string());
  ReportInputs inputs;
  const PlanResult result = read_plan_results(ctx.out, &inputs);
  write_report(result, inputs, ctx.out, ctx.cfg.plan.alpha);
  std::cout << std::ifstream(ctx.out / "summary.txt").rdbuf();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microscopic dynamic OD calibration: PPO and Bayesian-optimization baselines"};
  app.require_subcommand(1);
  Options opt;
  int (*command)(const Options&) = nullptr;

  auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON run configuration");
    sub->add_option("--seed", opt.seed, "base seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
    sub->add_option("--jobs", opt.jobs, "concurrent plan cells")->capture_default_str();
    sub->callback([&command, fn] { command = fn; });
  };
  add("gen-truth", "generate a ground-truth trajectory and detector table", cmd_gen_truth);
  add("train", "calibrate with PPO", cmd_train);
  add("baseline", "calibrate with Bayesian optimization", cmd_baseline);
  add("run-plan", "run every method and repetition of a comparison plan", cmd_run_plan);
  add("evaluate", "replay a trajectory and score it against the truth", cmd_evaluate);
  add("report", "rebuild summary and plot data from a plan results directory", cmd_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    return command(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const MissingInput& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return kMissingInput;
  } catch (const FormatError& e) {
    std::cerr << "unreadable input: " << e.what() << '\n';
    return kMissingInput;
  } catch (const NonFinite& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kNonFinite;
  } catch (const SimulatorAssertion& e) {
    std::cerr << "simulator assertion: " << e.what() << '\n';
    return kSimulatorAssertion;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
