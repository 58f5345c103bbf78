#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlqmc/circulant_field.hpp"
#include "mlqmc/covariance.hpp"
#include "mlqmc/fem.hpp"
#include "mlqmc/qmc.hpp"

namespace mlqmc {

enum class Method { MC, QMC, MLMC, MLQMC };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
inline bool is_multilevel(Method m) { return m == Method::MLMC || m == Method::MLQMC; }
inline bool uses_lattice(Method m) { return m == Method::QMC || m == Method::MLQMC; }

struct HierarchyConfig {
  int max_level = 4;
  // CE grid at level l has 2^(l + ce_level_offset) + 1 points per axis; the
  // FE mesh at level l has 2^(l + 2) + 1.
  int ce_level_offset = 0;
  MaternParams matern;
  MeanField mean = MeanField::constant(0.0);
  EmbeddingOptions embedding;
  SolverOptions solver;
  std::uint64_t seed = 0;            // master seed: shifts and MC normals
  std::uint64_t extension_seed = 0;  // random tail of the generating vectors
  double kappa = 2.0;                // model cost h^-kappa per sample
};

struct HierarchyLevel {
  int ell = 0;
  CirculantEmbedding embedding;
  GeneratingVector lattice;  // extended to s_ell
  double model_cost = 1.0;   // h_ell^-kappa relative to the finest level

  std::size_t dimension() const { return embedding.s; }
};

/// Everything that stays fixed while estimators run: FE meshes, CE
/// factorizations, generating vectors and the objective data.
class LevelHierarchy {
 public:
  LevelHierarchy(const HierarchyConfig& config, const GeneratingVector& base, TargetAndControl objective);

  int max_level() const { return config_.max_level; }
  const HierarchyConfig& config() const { return config_; }
  const HierarchyLevel& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  const FeHierarchy& fe() const { return fe_; }
  const TargetAndControl& objective() const { return objective_; }
  std::span<const double> state_load(int l) const { return state_loads_.at(static_cast<std::size_t>(l)); }

  /// Seed of the shift set (lattice methods) or normal stream (MC methods)
  /// of one level.
  std::uint64_t stream_seed(Method m, int l) const;
  /// Seed of the random tail of level l's generating vector.
  std::uint64_t extension_seed(int l) const;

 private:
  HierarchyConfig config_;
  FeHierarchy fe_;
  TargetAndControl objective_;
  std::vector<HierarchyLevel> levels_;
  std::vector<std::vector<double>> state_loads_;
};

struct SampleTiming {
  double ce_seconds = 0.0;
  double fe_seconds = 0.0;
  int solver_iterations = 0;
};

/// Adjoint q_l for a given coefficient field (state solve, then adjoint).
FeFunction adjoint_solution(const LevelHierarchy& hier, int l, const FieldRealization& a,
                            SampleTiming* timing = nullptr);

/// q_l - prolong(q_{l-1}) for one field realization; y is in importance order.
/// The coarse term uses the fine field restricted to the coarse CE grid. At
/// l = 0 this is q_0.
FeFunction coupled_sample(const LevelHierarchy& hier, int l, std::span<const double> y,
                          SampleTiming* timing = nullptr);

/// q_l alone, used by the single-level estimators.
FeFunction single_sample(const LevelHierarchy& hier, int l, std::span<const double> y,
                         SampleTiming* timing = nullptr);

/// Standard normals for sample k of an MC stream: a pure function of
/// (stream seed, k).
std::vector<double> mc_normals(std::uint64_t stream_seed, std::uint64_t k, std::size_t s);

struct LevelEstimate {
  int ell = 0;
  std::size_t n = 0;       // points per shift (lattice) or samples (MC)
  std::size_t shifts = 0;  // R; 0 for MC
  std::vector<FeFunction> per_shift_means;
  FeFunction mean;
  double variance = 0.0;  // V_ell
  bool low_confidence = false;
  double model_cost = 0.0;  // per sample (per point and shift for lattices)
  std::size_t samples = 0;  // total PDE samples evaluated
  SampleTiming timing;      // accumulated over all samples
};

struct SamplerOptions {
  unsigned threads = 1;
  std::size_t low_confidence_below = 8;
  std::size_t block = 64;  // samples held in memory at once per shift
};

/// Incremental estimator of E[q_l - q_{l-1}] (or E[q_l] when `coupled` is
/// false). Lattice samplers grow N by doubling along an embedded lattice, so
/// earlier points are reused; MC samplers append to their normal stream.
class LevelSampler {
 public:
  LevelSampler(const LevelHierarchy& hier, int l, Method method, std::size_t shifts, bool coupled,
               SamplerOptions options = {});

  /// Grows to n points per shift (lattice: n must be N * 2^k) or n samples (MC).
  void extend_to(std::size_t n);
  std::size_t n() const { return n_; }
  const LevelEstimate& estimate() const { return estimate_; }

 private:
  void extend_lattice(std::size_t n);
  void extend_mc(std::size_t n);
  void finish();

  const LevelHierarchy* hier_;
  int ell_;
  Method method_;
  bool coupled_;
  SamplerOptions options_;
  std::size_t n_ = 0;
  ShiftSet shifts_;
  std::uint64_t stream_seed_ = 0;
  std::vector<std::vector<double>> sums_;  // per shift (lattice) or {sum} (MC)
  std::vector<double> mc_mean_;  // running mean and L2 second moment (MC)
  double mc_m2_ = 0.0;
  LevelEstimate estimate_;
};

struct AllocationOptions {
  double cost_cap = std::numeric_limits<double>::infinity();
  std::size_t max_doublings = 64;
};

/// Greedy sample allocation. Doubles n[l] at the argmax of v[l] / (n[l] c[l])
/// (ties to the smaller l) until sum(v) <= eps^2; `refine(l, new_n)` returns
/// the re-estimated v[l]. `doubled` (if given) marks levels ever doubled.
/// Throws BudgetExceeded when sum(n c) would pass the cost cap.
void allocate_samples(double eps, std::span<std::size_t> n, std::span<double> v, std::span<const double> c,
                      const std::function<double(int, std::size_t)>& refine, const AllocationOptions& options = {},
                      std::vector<bool>* doubled = nullptr);

struct EstimatorOptions {
  std::size_t shifts = 10;
  std::size_t warmup_per_shift = 2;
  std::size_t mc_warmup = 20;
  AllocationOptions allocation;
  SamplerOptions sampler;
};

struct CostSummary {
  double model = 0.0;     // sum over levels of samples * model cost, in finest-sample units
  double ce_seconds = 0.0;
  double fe_seconds = 0.0;
  double normalized = 0.0;  // measured seconds / seconds of one finest sample
};

struct GradientEstimate {
  Method method = Method::MLQMC;
  double eps = 0.0;
  int finest_level = 0;
  std::vector<LevelEstimate> levels;
  std::vector<bool> doubled;
  FeFunction mean_q;
  FeFunction gradient;  // mean_q + alpha * interpolant of z
  double rmse_quadrature = 0.0;
  CostSummary cost;
};

/// Runs one estimator to tolerance eps. Single-level methods sample q_L only.
GradientEstimate estimate_gradient(const LevelHierarchy& hier, Method method, double eps,
                                   const EstimatorOptions& options = {});

inline GradientEstimate mlqmc_gradient(const LevelHierarchy& h, double eps, const EstimatorOptions& o = {}) {
  return estimate_gradient(h, Method::MLQMC, eps, o);
}
inline GradientEstimate mlmc_gradient(const LevelHierarchy& h, double eps, const EstimatorOptions& o = {}) {
  return estimate_gradient(h, Method::MLMC, eps, o);
}
inline GradientEstimate qmc_single_level(const LevelHierarchy& h, double eps, const EstimatorOptions& o = {}) {
  return estimate_gradient(h, Method::QMC, eps, o);
}
inline GradientEstimate mc_single_level(const LevelHierarchy& h, double eps, const EstimatorOptions& o = {}) {
  return estimate_gradient(h, Method::MC, eps, o);
}

struct LevelCost {
  int ell = 0;
  double ce_seconds = 0.0;  // median per coupled sample
  double fe_seconds = 0.0;
  double model = 0.0;
};

struct CostLedger {
  std::vector<LevelCost> levels;
  double finest_sample_seconds = 0.0;  // median of single q_L samples
};

/// Times `repeats` coupled samples per level and `repeats` finest single samples.
CostLedger cost_ledger(const LevelHierarchy& hier, std::size_t repeats = 20);

/// Fills cost.normalized from measured time and the ledger's finest-sample unit.
void normalize_cost(GradientEstimate& est, const CostLedger& ledger);

}  // namespace mlqmc
