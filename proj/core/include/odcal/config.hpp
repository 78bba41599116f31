#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "odcal/baselines.hpp"
#include "odcal/env.hpp"
#include "odcal/experiments.hpp"
#include "odcal/ppo.hpp"

namespace odcal {

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input file does not exist.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TruthSource {
  int total_vehicles = 300;
  std::optional<std::filesystem::path> table;       // read instead of generating
  std::optional<std::filesystem::path> trajectory;
};

struct PlanSettings {
  std::vector<std::string> methods;  // empty means the full roster
  int repetitions = 5;
  int budget = 600;
  double alpha = 0.05;
};

struct EvaluateSettings {
  std::optional<std::filesystem::path> trajectory;  // defaults to the truth trajectory
  std::optional<std::uint64_t> sim_seed;            // defaults to the truth simulator seed
};

/// Parsed top-level run configuration. Relative paths are resolved against
/// the directory of the config file.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "results";
  std::string network_source = "builtin";  // builtin | file
  double network_scale = 3.0;
  std::optional<std::filesystem::path> network_file;
  EnvConfig env;  // ground truth left empty until resolved
  TruthSource truth;
  PpoConfig ppo;
  BoConfig bo;
  PlanSettings plan;
  EvaluateSettings evaluate;
  nlohmann::json raw;  // the document as read
};

/// Throws ConfigError on unknown keys, wrong types or invalid values, and
/// MissingInput when a referenced network file is absent.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// The plan roster named in `config.plan.methods`, with BO settings taken from `config.bo`.
std::vector<MethodSpec> resolve_methods(const RunConfig& config);

}  // namespace odcal
