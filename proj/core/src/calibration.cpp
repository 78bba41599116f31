#include "odcal/calibration.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace odcal {

bool CalibrationResult::offer(double error, const Trajectory& trajectory, const CountTable& table,
                              std::uint64_t seed, int index) {
  if (!(error < best_error)) return false;
  best_error = error;
  best_trajectory = trajectory;
  best_table = table;
  best_seed = seed;
  best_index = index;
  return true;
}

void write_calibration_result(const CalibrationResult& result, std::span<const int> detector_links,
                              const std::filesystem::path& dir, const std::string& method) {
  std::filesystem::create_directories(dir);
  if (result.best_index >= 0) {
    write_trajectory(result.best_trajectory, dir / "trajectory.csv");
    write_count_table(result.best_table, detector_links, dir / "table.csv");
  }
  std::ofstream hist(dir / "history.csv");
  hist << std::setprecision(10);
  hist << "index,error,incumbent,return,loss_total,loss_clip,loss_value,entropy,tag\n";
  for (const EvaluationRecord& r : result.history) {
    hist << r.index << ',' << r.error << ',' << r.incumbent << ',' << r.episode_return << ',' << r.loss_total << ','
         << r.loss_clip << ',' << r.loss_value << ',' << r.entropy << ',' << std::hex << r.tag << std::dec << '\n';
  }
  std::ofstream summary(dir / "summary.txt");
  summary << std::setprecision(10);
  summary << "method " << method << '\n';
  summary << "evaluations " << result.evaluations() << '\n';
  summary << "best_error " << result.best_error << '\n';
  summary << "best_reward " << result.best_reward() << '\n';
  summary << "best_index " << result.best_index << '\n';
  summary << "best_seed " << result.best_seed << '\n';
  if (result.final_policy) result.final_policy->save(dir / "policy.ckpt");
}

CalibrationResult read_calibration_result(const std::filesystem::path& dir) {
  CalibrationResult result;
  std::ifstream summary(dir / "summary.txt");
  if (!summary) throw FormatError("missing " + (dir / "summary.txt").string());
  std::string key;
  while (summary >> key) {
    if (key == "best_error") {
      std::string v;
      summary >> v;
      result.best_error = std::stod(v);
    } else if (key == "best_index") {
      summary >> result.best_index;
    } else if (key == "best_seed") {
      summary >> result.best_seed;
    } else {
      std::string rest;
      std::getline(summary, rest);
    }
  }
  if (result.best_index >= 0) {
    result.best_trajectory = read_trajectory(dir / "trajectory.csv");
    result.best_table = read_count_table(dir / "table.csv");
  }
  std::ifstream hist(dir / "history.csv");
  if (!hist) throw FormatError("missing " + (dir / "history.csv").string());
  std::string line;
  std::getline(hist, line);
  while (std::getline(hist, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string cell;
    std::vector<std::string> f;
    while (std::getline(in, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw FormatError("malformed history row: " + line);
    EvaluationRecord r;
    r.index = std::stoi(f[0]);
    r.error = std::stod(f[1]);
    r.incumbent = std::stod(f[2]);
    r.episode_return = std::stod(f[3]);
    r.loss_total = std::stod(f[4]);
    r.loss_clip = std::stod(f[5]);
    r.loss_value = std::stod(f[6]);
    r.entropy = std::stod(f[7]);
    r.tag = std::stoull(f[8], nullptr, 16);
    result.history.push_back(r);
  }
  return result;
}

}  // namespace odcal
