#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "mlqmc/estimators.hpp"

namespace mlqmc {

/// Everything a study needs, read from one JSON file. Relative paths are
/// resolved against the directory of the config file.
struct RunConfig {
  std::string preset = "problem1";
  MaternParams matern{0.1, 1.0, 0.5};
  double mean = 0.0;  // constant mean of the log-field

  int max_level = 4;
  int level_limit = 6;
  int ce_level_offset = 0;
  EmbeddingOptions embedding;
  SolverOptions solver;

  std::filesystem::path generating_vector = MLQMC_DATA_DIR "/lattice-cbc-8-16384.256.txt";
  std::uint64_t lattice_n_min = 8;
  std::uint64_t lattice_n_max = 16384;
  std::size_t shifts = 10;
  std::uint64_t extension_seed = 0;
  std::size_t warmup_per_shift = 2;

  std::vector<Method> methods{Method::MLQMC};
  std::vector<double> eps{1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  double cost_cap = std::numeric_limits<double>::infinity();
  double kappa = 2.0;
  std::size_t mc_warmup = 20;
  std::size_t low_confidence_below = 8;

  std::string target = "indicator";  // or "zero"
  std::string control = "reference";  // or "zero"
  double alpha = 1.0;

  // variance study: dyadic N sweep per level
  std::size_t study_n_min = 1;
  std::size_t study_n_max = 512;
  std::size_t ledger_repeats = 20;

  std::filesystem::path output_dir = "mlqmc-out";
  std::uint64_t seed = 1;
  unsigned threads = 1;

  bool operator==(const RunConfig&) const;
};

RunConfig preset_config(const std::string& name);

/// Throws ConfigError on unknown keys, bad types or violated ranges.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);
void validate(const RunConfig& c);

/// Stable hash of the settings that influence results (not output location
/// or thread count), as 16 hex digits.
std::string config_hash(const RunConfig& c);

HierarchyConfig hierarchy_config(const RunConfig& c);
EstimatorOptions estimator_options(const RunConfig& c);
TargetAndControl objective(const RunConfig& c);

}  // namespace mlqmc
