#include "odcal/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "odcal/rng.hpp"

namespace odcal {

TrueDemand generate_true_demand(int total_vehicles, const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  const long long cells = static_cast<long long>(config.steps()) * config.od_count();
  if (total_vehicles < 0 || total_vehicles > cells) {
    throw std::invalid_argument("total vehicles must lie in [0, T * n_od]");
  }
  TrueDemand out;
  out.requested = total_vehicles;
  const double p = cells > 0 ? static_cast<double>(total_vehicles) / static_cast<double>(cells) : 0.0;
  const double tolerance = 0.05 * total_vehicles;
  for (;;) {
    Rng rng(derive_seed(seed, "truth/draw" + std::to_string(out.draws)));
    ++out.draws;
    Trajectory traj(config.steps(), config.od_count());
    for (int t = 0; t < traj.steps(); ++t) {
      for (int od = 0; od < traj.od_count(); ++od) traj.at(t, od) = uniform01(rng) < p ? 1 : 0;
    }
    const long long realized = traj.departures();
    if (std::abs(static_cast<double>(realized - total_vehicles)) <= tolerance) {
      out.trajectory = std::move(traj);
      out.realized = realized;
      break;
    }
  }
  out.sim_seed = derive_seed(seed, "truth/sim");
  EnvConfig scoring = config;
  scoring.ground_truth = CountTable(config.intervals(), config.detector_count());
  out.table = evaluate_demand(scoring, out.trajectory, out.sim_seed).simulated;
  return out;
}

CountTable od_interval_aggregate(const Trajectory& trajectory, int steps_per_interval) {
  if (steps_per_interval <= 0 || trajectory.steps() % steps_per_interval != 0) {
    throw std::invalid_argument("trajectory length must be a multiple of the interval length");
  }
  CountTable out(trajectory.steps() / steps_per_interval, trajectory.od_count());
  for (int t = 0; t < trajectory.steps(); ++t) {
    for (int od = 0; od < trajectory.od_count(); ++od) out.at(t / steps_per_interval, od) += trajectory.at(t, od);
  }
  return out;
}

std::vector<MethodSpec> default_roster(double env_input_interval) {
  std::vector<MethodSpec> roster;
  roster.push_back({"true-replication", MethodKind::TrueReplication, {}});
  roster.push_back({"RL-PPO", MethodKind::Ppo, {}});
  for (BoMode mode : {BoMode::Simultaneous, BoMode::Sequential}) {
    for (double interval : {300.0, env_input_interval}) {
      BoConfig bo;
      bo.mode = mode;
      bo.input_interval = interval;
      roster.push_back({method_name(bo), MethodKind::Bo, bo});
    }
  }
  return roster;
}

void ExperimentPlan::validate() const {
  env.validate();
  if (repetitions < 1) throw std::invalid_argument("plan needs at least one repetition");
  if (budget < 1) throw std::invalid_argument("plan budget must be positive");
  if (jobs < 1) throw std::invalid_argument("jobs must be positive");
  if (methods.empty()) throw std::invalid_argument("plan has no methods");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      if (methods[i].name == methods[j].name) throw std::invalid_argument("duplicate method " + methods[i].name);
    }
    if (methods[i].kind == MethodKind::Bo) methods[i].bo.validate();
  }
  if (truth_trajectory.steps() != env.steps() || truth_trajectory.od_count() != env.od_count()) {
    throw std::invalid_argument("truth trajectory must be T x n_od");
  }
  ppo.validate();
}

std::uint64_t cell_seed(std::uint64_t plan_seed, const std::string& method, int rep) {
  return derive_seed(plan_seed, "cell/" + method + "/rep" + std::to_string(rep));
}

std::uint64_t evaluation_seed(std::uint64_t plan_seed) { return derive_seed(plan_seed, "eval"); }

std::vector<double> MethodResult::best_errors() const {
  std::vector<double> out;
  for (const RepetitionResult& r : reps) {
    if (!r.failed) out.push_back(r.best_error());
  }
  return out;
}

double MethodResult::mean_best_reward() const {
  const std::vector<double> e = best_errors();
  if (e.empty()) return std::numeric_limits<double>::quiet_NaN();
  return -std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
}

double MethodResult::median_best_error() const {
  std::vector<double> e = best_errors();
  if (e.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(e.begin(), e.end());
  const std::size_t h = e.size() / 2;
  return e.size() % 2 == 1 ? e[h] : 0.5 * (e[h - 1] + e[h]);
}

std::vector<int> PlanResult::ordering() const {
  std::vector<int> idx(methods.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double ra = methods[static_cast<std::size_t>(a)].mean_best_reward();
    const double rb = methods[static_cast<std::size_t>(b)].mean_best_reward();
    if (std::isnan(ra) != std::isnan(rb)) return std::isnan(rb);
    return ra > rb;
  });
  return idx;
}

RepetitionResult run_cell(const ExperimentPlan& plan, const MethodSpec& method, int rep) {
  RepetitionResult out;
  out.rep = rep;
  out.seed = cell_seed(plan.seed, method.name, rep);
  try {
    switch (method.kind) {
      case MethodKind::TrueReplication: {
        const DemandEvaluation ev = evaluate_demand(plan.env, plan.truth_trajectory, out.seed);
        out.calibration.offer(ev.error, plan.truth_trajectory, ev.simulated, out.seed, 0);
        EvaluationRecord rec;
        rec.error = ev.error;
        rec.incumbent = ev.error;
        out.calibration.history.push_back(rec);
        break;
      }
      case MethodKind::Ppo: {
        PpoConfig cfg = plan.ppo;
        cfg.total_episodes = plan.budget;
        out.calibration = train(plan.env, cfg, out.seed);
        break;
      }
      case MethodKind::Bo: {
        BoConfig cfg = method.bo;
        cfg.iterations = plan.budget;
        out.calibration = bo_calibrate(cfg, plan.env, out.seed);
        break;
      }
    }
    const DemandEvaluation ev = evaluate_demand(plan.env, out.calibration.best_trajectory, evaluation_seed(plan.seed));
    out.eval_error = ev.error;
    out.eval_table = ev.simulated;
    out.od_counts = od_interval_aggregate(out.calibration.best_trajectory, plan.env.steps_per_interval());
  } catch (const NonFinite& e) {
    out.failed = true;
    out.failure = FailureKind::NonFinite;
    out.message = e.what();
  } catch (const SimulatorAssertion& e) {
    out.failed = true;
    out.failure = FailureKind::Simulator;
    out.message = e.what();
  } catch (const std::exception& e) {
    out.failed = true;
    out.failure = FailureKind::Other;
    out.message = e.what();
  }
  return out;
}

PlanResult run_plan(const ExperimentPlan& plan, const CellProgress& progress) {
  plan.validate();
  PlanResult result;
  struct Cell {
    std::size_t method;
    int rep;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < plan.methods.size(); ++m) {
    result.methods.push_back({plan.methods[m], std::vector<RepetitionResult>(static_cast<std::size_t>(plan.repetitions))});
    for (int r = 0; r < plan.repetitions; ++r) cells.push_back({m, r});
  }
  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell c = cells[i];
      RepetitionResult r = run_cell(plan, plan.methods[c.method], c.rep);
      std::lock_guard lock(report);
      if (progress) progress(plan.methods[c.method].name, c.rep, r);
      result.methods[c.method].reps[static_cast<std::size_t>(c.rep)] = std::move(r);
    }
  };
  const int threads = std::min<int>(plan.jobs, static_cast<int>(cells.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return result;
}

std::string method_slug(const std::string& name) {
  std::string out;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-') {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (ch == '(' || ch == '_' || ch == ' ') {
      out += '_';
    }
  }
  return out;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::filesystem::path cell_dir(const std::filesystem::path& dir, const std::string& method, int rep) {
  return dir / "cells" / method_slug(method) / ("rep" + std::to_string(rep));
}

const char* kind_name(MethodKind k) {
  switch (k) {
    case MethodKind::TrueReplication: return "true-replication";
    case MethodKind::Ppo: return "ppo";
    case MethodKind::Bo: return "bo";
  }
  return "?";
}

MethodKind parse_kind(const std::string& s) {
  if (s == "true-replication") return MethodKind::TrueReplication;
  if (s == "ppo") return MethodKind::Ppo;
  if (s == "bo") return MethodKind::Bo;
  throw FormatError("unknown method kind " + s);
}

}  // namespace

void write_report(const PlanResult& result, const ReportInputs& in, const std::filesystem::path& dir, double alpha) {
  std::filesystem::create_directories(dir);
  std::ofstream summary_csv(dir / "summary.csv");
  summary_csv << "rank,method,repetitions,failed,mean_best_reward,median_best_error,mean_eval_error\n";
  std::ofstream summary_txt(dir / "summary.txt");
  summary_txt << "method ordering by mean best reward (higher is better)\n";
  int rank = 1;
  for (int i : result.ordering()) {
    const MethodResult& m = result.methods[static_cast<std::size_t>(i)];
    int failed = 0;
    double eval_sum = 0.0;
    for (const RepetitionResult& r : m.reps) {
      if (r.failed) ++failed;
      else eval_sum += r.eval_error;
    }
    const int ok = static_cast<int>(m.reps.size()) - failed;
    const double mean_eval = ok > 0 ? eval_sum / ok : std::numeric_limits<double>::quiet_NaN();
    summary_csv << rank << ',' << m.spec.name << ',' << m.reps.size() << ',' << failed << ','
                << fmt(m.mean_best_reward()) << ',' << fmt(m.median_best_error()) << ',' << fmt(mean_eval) << '\n';
    summary_txt << rank << ". " << m.spec.name << "  mean best reward " << fmt(m.mean_best_reward())
                << "  median best error " << fmt(m.median_best_error());
    if (failed > 0) summary_txt << "  (" << failed << " failed)";
    summary_txt << '\n';
    ++rank;
  }

  std::ofstream trend(dir / "reward_trend.csv");
  trend << "method,rep,index,reward,best_reward\n";
  std::ofstream flows(dir / "link_flows.csv");
  flows << "method,rep,interval,detector_link,simulated,truth\n";
  std::ofstream od(dir / "od_counts.csv");
  od << "method,rep,interval,od,estimated,truth\n";
  std::ofstream metrics(dir / "metrics.csv");
  metrics << "method,rep,mse,rmse,mae,mape_pct,sde,p95_ae,max_ae,mbe,r2,degenerate_truth\n";
  std::ofstream sig(dir / "significance.csv");
  sig << "method,rep,detector_link,branch,statistic,p_value,n,normality_p,flag,significant\n";

  const CountTable truth_od = od_interval_aggregate(in.truth_trajectory, in.steps_per_interval);
  for (const MethodResult& m : result.methods) {
    for (const RepetitionResult& r : m.reps) {
      if (r.failed) continue;
      const std::string key = m.spec.name + ',' + std::to_string(r.rep);
      for (const EvaluationRecord& e : r.calibration.history) {
        trend << key << ',' << e.index << ',' << fmt(e.error == 0.0 ? 0.0 : -e.error) << ','
              << fmt(e.incumbent == 0.0 ? 0.0 : -e.incumbent) << '\n';
      }
      const CountTable& table = r.calibration.best_table;
      for (int k = 0; k < table.rows(); ++k) {
        for (int d = 0; d < table.cols(); ++d) {
          flows << key << ',' << k + 1 << ',' << in.detector_links[static_cast<std::size_t>(d)] << ','
                << table.at(k, d) << ',' << in.truth_table.at(k, d) << '\n';
        }
      }
      const CountTable est_od = od_interval_aggregate(r.calibration.best_trajectory, in.steps_per_interval);
      for (int k = 0; k < est_od.rows(); ++k) {
        for (int o = 0; o < est_od.cols(); ++o) {
          od << key << ',' << k + 1 << ',' << o << ',' << est_od.at(k, o) << ',' << truth_od.at(k, o) << '\n';
        }
      }
      const MetricsReport mr = compute_metrics(table, in.truth_table);
      metrics << key << ',' << fmt(mr.mse) << ',' << fmt(mr.rmse) << ',' << fmt(mr.mae) << ',' << fmt(mr.mape_pct)
              << ',' << fmt(mr.sde) << ',' << fmt(mr.p95_ae) << ',' << fmt(mr.max_ae) << ',' << fmt(mr.mbe) << ','
              << fmt(mr.r2) << ',' << (mr.degenerate_truth ? 1 : 0) << '\n';
      const std::vector<TestOutcome> tests = significance_pipeline(table, in.truth_table, alpha);
      for (std::size_t d = 0; d < tests.size(); ++d) {
        const TestOutcome& t = tests[d];
        sig << key << ',' << in.detector_links[d] << ',' << to_string(t.test) << ',' << fmt(t.statistic) << ','
            << fmt(t.p_value) << ',' << t.n << ',' << fmt(t.normality_p) << ',' << to_string(t.flag) << ','
            << (t.p_value <= alpha ? 1 : 0) << '\n';
      }
    }
  }
}

void write_plan_results(const PlanResult& result, const ExperimentPlan& plan, const std::filesystem::path& dir,
                        double alpha) {
  std::filesystem::create_directories(dir);
  const std::vector<int>& links = plan.env.network->detectors();
  write_trajectory(plan.truth_trajectory, dir / "truth_trajectory.csv");
  write_count_table(plan.env.ground_truth, links, dir / "truth_table.csv");
  std::ofstream manifest(dir / "plan.txt");
  manifest << "steps_per_interval " << plan.env.steps_per_interval() << '\n';
  manifest << "repetitions " << plan.repetitions << '\n';
  manifest << "budget " << plan.budget << '\n';
  manifest << "seed " << plan.seed << '\n';
  for (const MethodResult& m : result.methods) manifest << "method " << kind_name(m.spec.kind) << ' ' << m.spec.name << '\n';

  for (const MethodResult& m : result.methods) {
    for (const RepetitionResult& r : m.reps) {
      const std::filesystem::path cdir = cell_dir(dir, m.spec.name, r.rep);
      std::filesystem::create_directories(cdir);
      std::ofstream cell(cdir / "cell.txt");
      cell << std::setprecision(10);
      cell << "seed " << r.seed << '\n' << "failed " << (r.failed ? 1 : 0) << '\n' << "eval_error " << r.eval_error << '\n'
           << "failure " << static_cast<int>(r.failure) << '\n';
      if (r.failed) {
        cell << "message " << r.message << '\n';
        continue;
      }
      write_calibration_result(r.calibration, links, cdir, m.spec.name);
      write_count_table(r.eval_table, links, cdir / "eval_table.csv");
    }
  }
  write_report(result, {plan.env.ground_truth, plan.truth_trajectory, links, plan.env.steps_per_interval()}, dir, alpha);
}

PlanResult read_plan_results(const std::filesystem::path& dir, ReportInputs* inputs) {
  std::ifstream manifest(dir / "plan.txt");
  if (!manifest) throw FormatError("missing " + (dir / "plan.txt").string());
  PlanResult result;
  int reps = 0, steps_per_interval = 0;
  std::string key;
  while (manifest >> key) {
    if (key == "repetitions") {
      manifest >> reps;
    } else if (key == "steps_per_interval") {
      manifest >> steps_per_interval;
    } else if (key == "method") {
      std::string kind, name;
      manifest >> kind;
      std::getline(manifest >> std::ws, name);
      result.methods.push_back({{name, parse_kind(kind), {}}, {}});
    } else {
      std::string rest;
      std::getline(manifest, rest);
    }
  }
  for (MethodResult& m : result.methods) {
    for (int r = 0; r < reps; ++r) {
      const std::filesystem::path cdir = cell_dir(dir, m.spec.name, r);
      RepetitionResult rr;
      rr.rep = r;
      std::ifstream cell(cdir / "cell.txt");
      if (!cell) throw FormatError("missing " + (cdir / "cell.txt").string());
      int failed = 0;
      while (cell >> key) {
        if (key == "seed") cell >> rr.seed;
        else if (key == "failed") cell >> failed;
        else if (key == "eval_error") cell >> rr.eval_error;
        else if (key == "failure") {
          int f = 0;
          cell >> f;
          rr.failure = static_cast<FailureKind>(f);
        }
        else if (key == "message") std::getline(cell >> std::ws, rr.message);
      }
      rr.failed = failed != 0;
      if (!rr.failed) {
        rr.calibration = read_calibration_result(cdir);
        rr.eval_table = read_count_table(cdir / "eval_table.csv");
        rr.od_counts = od_interval_aggregate(rr.calibration.best_trajectory, steps_per_interval);
      }
      m.reps.push_back(std::move(rr));
    }
  }
  if (inputs) {
    inputs->truth_trajectory = read_trajectory(dir / "truth_trajectory.csv");
    inputs->truth_table = read_count_table(dir / "truth_table.csv", &inputs->detector_links);
    inputs->steps_per_interval = steps_per_interval;
  }
  return result;
}

}  // namespace odcal
