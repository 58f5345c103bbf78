#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlqmc/config.hpp"

namespace mlqmc {

/// --out wins, then MLQMC_OUTPUT_DIR, then the config's output directory.
std::filesystem::path resolve_output_dir(const RunConfig& c, const std::optional<std::filesystem::path>& cli_out);

/// Writes via a temporary file in the same directory and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest round-trip decimal form.
std::string format_double(double v);

std::string gradient_dump(const FeLevel& lev, const FeFunction& f);
std::string gradient_csv(const FeLevel& lev, const FeFunction& f);

/// One estimator run, as stored in the manifest and the resume cache. Timing
/// fields live under the "timing" key.
nlohmann::json estimate_record(const LevelHierarchy& hier, const GradientEstimate& est);

/// Drops every "timing" member, recursively.
nlohmann::json without_timing(nlohmann::json j);

LevelHierarchy build_hierarchy(const RunConfig& c);

struct ExperimentResult {
  nlohmann::json manifest;
  std::vector<nlohmann::json> records;  // one per (method, eps), config order
};

/// Runs each configured method at each eps, reusing cached results from an
/// earlier run with the same config hash. Writes manifest.json, results.csv,
/// levels.csv and gradient_<method>.{txt,csv} for the smallest eps.
ExperimentResult run_experiment(const RunConfig& c, const std::filesystem::path& out);

struct VarianceRow {
  int ell;
  std::size_t n;
  std::size_t shifts;
  double r_times_v;
};

struct VarianceStudy {
  std::vector<VarianceRow> rows;
  std::vector<double> slopes;       // per level, fitted log(R V) vs log N
  std::vector<double> mean_norms;   // per level, L2 norm of the correction mean at the largest N
  double rho = std::nan("");        // fitted decay of mean_norms in h over levels >= 1
  double phi = std::nan("");        // fitted decay of V at the largest N in h over levels >= 1
};

/// R*V_l for every level and dyadic N in [study_n_min, study_n_max], plus the
/// level-decay exponents of the correction mean and variance.
VarianceStudy variance_study(const RunConfig& c, const std::filesystem::path& out);

struct CostRow {
  Method method;
  double eps;
  double normalized_cost;
  double model_cost;
  double rmse;
};

struct CostCurve {
  std::vector<CostRow> rows;
  std::vector<std::pair<Method, double>> exponents;        // from measured cost
  std::vector<std::pair<Method, double>> model_exponents;  // from model cost
  CostLedger ledger;
};

/// All four methods over the eps list, plus the per-level cost profile.
CostCurve cost_curve(const RunConfig& c, const std::filesystem::path& out);

/// Gradient, target and control fields for the first configured method at
/// the smallest eps.
void dump_gradient(const RunConfig& c, const std::filesystem::path& out);

/// Least-squares slope of y against x.
double fitted_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mlqmc
