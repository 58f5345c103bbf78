#include "mlqmc/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "mlqmc/errors.hpp"
#include "mlqmc/parallel.hpp"
#include "mlqmc/rng.hpp"

namespace mlqmc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

UniformGrid ce_grid(const HierarchyConfig& c, int l) { return UniformGrid(2, (1 << (l + c.ce_level_offset)) + 1); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

FeFunction diff_with_coarse(const LevelHierarchy& hier, int l, const FieldRealization& fine, FeFunction q_fine,
                            SampleTiming* timing) {
  auto t0 = Clock::now();
  const auto coarse = restrict_to_coarse(fine, ce_grid(hier.config(), l - 1));
  if (timing) timing->ce_seconds += seconds_since(t0);
  const auto q_coarse = adjoint_solution(hier, l - 1, coarse, timing);
  t0 = Clock::now();
  const auto up = prolong(q_coarse, hier.fe().level(l));
  axpy(-1.0, up.nodal_values, q_fine.nodal_values);
  if (timing) timing->fe_seconds += seconds_since(t0);
  return q_fine;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::MC: return "mc";
    case Method::QMC: return "qmc";
    case Method::MLMC: return "mlmc";
    case Method::MLQMC: return "mlqmc";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::MC, Method::QMC, Method::MLMC, Method::MLQMC}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

LevelHierarchy::LevelHierarchy(const HierarchyConfig& config, const GeneratingVector& base, TargetAndControl objective)
    : config_(config), fe_(config.max_level, config.solver), objective_(std::move(objective)) {
  if (config.max_level < 0) throw ConfigError("max_level must be non-negative");
  if (config.ce_level_offset + config.max_level < 0 || config.ce_level_offset < 0) {
    throw ConfigError("CE level offset must be non-negative");
  }
  const auto kernel = matern_kernel(config.matern);
  const double h_fine = fe_.level(config.max_level).h;
  for (int l = 0; l <= config.max_level; ++l) {
    HierarchyLevel lev;
    lev.ell = l;
    lev.embedding = build_embedding(kernel, ce_grid(config, l), config.embedding);
    if (!levels_.empty() && lev.embedding.s < levels_.back().embedding.s) {
      throw NestingViolation("stochastic dimension decreased from level " + std::to_string(l - 1));
    }
    lev.lattice = extend_vector(base, lev.embedding.s, extension_seed(l));
    lev.model_cost = std::pow(h_fine / fe_.level(l).h, config.kappa);
    levels_.push_back(std::move(lev));
    state_loads_.push_back(assemble_load(fe_.level(l), objective_.z));
  }
}

std::uint64_t LevelHierarchy::extension_seed(int l) const {
  return derive_seed({config_.extension_seed, 0x7a, static_cast<std::uint64_t>(l)});
}

std::uint64_t LevelHierarchy::stream_seed(Method m, int l) const {
  // Lattice methods share shifts per level, MC methods share normal streams,
  // so an L = 0 multilevel run coincides with its single-level counterpart.
  const std::uint64_t family = uses_lattice(m) ? 0x5168 : 0x4d43;
  return derive_seed({config_.seed, family, static_cast<std::uint64_t>(l)});
}

FeFunction adjoint_solution(const LevelHierarchy& hier, int l, const FieldRealization& a, SampleTiming* timing) {
  const auto t0 = Clock::now();
  SolveStats st_u, st_q;
  const auto op = hier.fe().prepare(l, a);
  const auto u = op.solve(hier.state_load(l), &st_u);
  auto q = op.solve(assemble_adjoint_load(hier.fe().level(l), u, hier.objective().g), &st_q);
  if (timing) {
    timing->fe_seconds += seconds_since(t0);
    timing->solver_iterations += st_u.iterations + st_q.iterations;
  }
  return q;
}

FeFunction single_sample(const LevelHierarchy& hier, int l, std::span<const double> y, SampleTiming* timing) {
  const auto t0 = Clock::now();
  const auto& lev = hier.level(l);
  const auto a = sample_field(lev.embedding, hier.config().mean, y, l);
  if (timing) timing->ce_seconds += seconds_since(t0);
  return adjoint_solution(hier, l, a, timing);
}

FeFunction coupled_sample(const LevelHierarchy& hier, int l, std::span<const double> y, SampleTiming* timing) {
  const auto t0 = Clock::now();
  const auto a = sample_field(hier.level(l).embedding, hier.config().mean, y, l);
  if (timing) timing->ce_seconds += seconds_since(t0);
  auto q = adjoint_solution(hier, l, a, timing);
  if (l == 0) return q;
  return diff_with_coarse(hier, l, a, std::move(q), timing);
}

std::vector<double> mc_normals(std::uint64_t stream_seed, std::uint64_t k, std::size_t s) {
  std::mt19937_64 eng(derive_seed({stream_seed, k}));
  std::vector<double> y(s);
  for (auto& v : y) v = inverse_normal_cdf(uniform_open(eng));
  return y;
}

LevelSampler::LevelSampler(const LevelHierarchy& hier, int l, Method method, std::size_t shifts, bool coupled,
                           SamplerOptions options)
    : hier_(&hier), ell_(l), method_(method), coupled_(coupled), options_(options) {
  if (l < 0 || l > hier.max_level()) throw DomainError("LevelSampler: level out of range");
  stream_seed_ = hier.stream_seed(method, l);
  const std::size_t dof = hier.fe().level(l).dof;
  if (uses_lattice(method)) {
    if (shifts < 2) throw InsufficientShifts("at least two shifts are needed to estimate the variance");
    shifts_ = make_shifts(shifts, hier.level(l).dimension(), stream_seed_);
    sums_.assign(shifts, std::vector<double>(dof, 0.0));
  } else {
    mc_mean_.assign(dof, 0.0);
  }
  estimate_.ell = l;
  estimate_.shifts = uses_lattice(method) ? shifts : 0;
  estimate_.model_cost = hier.level(l).model_cost;
  options_.block = std::max<std::size_t>(1, options_.block);
}

void LevelSampler::extend_to(std::size_t n) {
  if (n <= n_) return;
  if (uses_lattice(method_)) {
    extend_lattice(n);
  } else {
    extend_mc(n);
  }
  finish();
}

void LevelSampler::extend_lattice(std::size_t n) {
  if (n_ != 0) {
    std::size_t m = n_;
    while (m < n) m *= 2;
    if (m != n) throw DomainError("lattice sample counts must grow by doubling");
  }
  const auto& hl = hier_->level(ell_);
  const std::size_t s = hl.dimension();

  // Indices of the new points in the lattice of size `big`: all of 1..big on
  // the first call, afterwards the odd ones (the even ones are the old lattice).
  auto run = [&](std::uint64_t big, std::uint64_t first, std::uint64_t step) {
    std::vector<std::uint64_t> idx;
    for (std::uint64_t i = first; i <= big; i += step) idx.push_back(i);
    for (std::size_t r = 0; r < shifts_.size(); ++r) {
      const auto& delta = shifts_.shifts[r];
      for (std::size_t b0 = 0; b0 < idx.size(); b0 += options_.block) {
        const std::size_t nb = std::min(options_.block, idx.size() - b0);
        std::vector<FeFunction> out(nb);
        std::vector<SampleTiming> times(nb);
        parallel_for(nb, options_.threads, [&](std::size_t k) {
          const auto t0 = Clock::now();
          std::vector<double> xi(s);
          lattice_point(hl.lattice, big, idx[b0 + k], delta, xi);
          for (auto& v : xi) v = inverse_normal_cdf(clamp_unit(v));
          times[k].ce_seconds += seconds_since(t0);
          try {
            out[k] = coupled_ ? coupled_sample(*hier_, ell_, xi, &times[k]) : single_sample(*hier_, ell_, xi, &times[k]);
          } catch (const SolverDiverged& e) {
            throw SolverDiverged(std::string(e.what()) + " (level " + std::to_string(ell_) + ", shift " +
                                 std::to_string(r) + ", point " + std::to_string(idx[b0 + k]) + "/" +
                                 std::to_string(big) + ")");
          }
        });
        for (std::size_t k = 0; k < nb; ++k) {
          axpy(1.0, out[k].nodal_values, sums_[r]);
          estimate_.timing.ce_seconds += times[k].ce_seconds;
          estimate_.timing.fe_seconds += times[k].fe_seconds;
          estimate_.timing.solver_iterations += times[k].solver_iterations;
        }
        estimate_.samples += nb;
      }
    }
  };

  if (n_ == 0) {
    run(n, 1, 1);
  } else {
    for (std::size_t big = 2 * n_; big <= n; big *= 2) run(big, 1, 2);
  }
  n_ = n;
}

void LevelSampler::extend_mc(std::size_t n) {
  const auto& hl = hier_->level(ell_);
  const auto& fe_level = hier_->fe().level(ell_);
  const std::size_t s = hl.dimension();
  for (std::size_t b0 = n_; b0 < n; b0 += options_.block) {
    const std::size_t nb = std::min(options_.block, n - b0);
    std::vector<FeFunction> out(nb);
    std::vector<SampleTiming> times(nb);
    parallel_for(nb, options_.threads, [&](std::size_t k) {
      const auto t0 = Clock::now();
      const auto y = mc_normals(stream_seed_, b0 + k, s);
      times[k].ce_seconds += seconds_since(t0);
      try {
        out[k] = coupled_ ? coupled_sample(*hier_, ell_, y, &times[k]) : single_sample(*hier_, ell_, y, &times[k]);
      } catch (const SolverDiverged& e) {
        throw SolverDiverged(std::string(e.what()) + " (level " + std::to_string(ell_) + ", sample " +
                             std::to_string(b0 + k) + ")");
      }
    });
    // Welford update in sample order; the second moment is kept in the L2
    // inner product so V integrates the pointwise variance exactly.
    for (std::size_t k = 0; k < nb; ++k) {
      const double count = static_cast<double>(b0 + k + 1);
      FeFunction before{ell_, std::vector<double>(fe_level.dof)}, after{ell_, std::vector<double>(fe_level.dof)};
      for (std::size_t i = 0; i < fe_level.dof; ++i) {
        const double x = out[k].nodal_values[i];
        before.nodal_values[i] = x - mc_mean_[i];
        mc_mean_[i] += before.nodal_values[i] / count;
        after.nodal_values[i] = x - mc_mean_[i];
      }
      mc_m2_ += l2_inner(fe_level, before, after);
      estimate_.timing.ce_seconds += times[k].ce_seconds;
      estimate_.timing.fe_seconds += times[k].fe_seconds;
      estimate_.timing.solver_iterations += times[k].solver_iterations;
    }
    estimate_.samples += nb;
  }
  n_ = n;
}

void LevelSampler::finish() {
  const auto& fe_level = hier_->fe().level(ell_);
  estimate_.n = n_;
  estimate_.low_confidence = n_ < options_.low_confidence_below;
  if (uses_lattice(method_)) {
    const std::size_t r_count = sums_.size();
    const double inv_n = 1.0 / static_cast<double>(n_);
    estimate_.per_shift_means.assign(r_count, FeFunction{ell_, {}});
    FeFunction mean{ell_, std::vector<double>(fe_level.dof, 0.0)};
    for (std::size_t r = 0; r < r_count; ++r) {
      auto& m = estimate_.per_shift_means[r].nodal_values;
      m.resize(fe_level.dof);
      for (std::size_t i = 0; i < fe_level.dof; ++i) m[i] = sums_[r][i] * inv_n;
      axpy(1.0 / static_cast<double>(r_count), m, mean.nodal_values);
    }
    double ss = 0.0;
    for (const auto& m : estimate_.per_shift_means) {
      FeFunction d{ell_, m.nodal_values};
      axpy(-1.0, mean.nodal_values, d.nodal_values);
      ss += l2_inner(fe_level, d, d);
    }
    estimate_.variance = ss / static_cast<double>(r_count * (r_count - 1));
    estimate_.mean = std::move(mean);
  } else {
    estimate_.mean = FeFunction{ell_, mc_mean_};
    const double nn = static_cast<double>(n_);
    estimate_.variance = n_ > 1 ? std::max(0.0, mc_m2_) / (nn * (nn - 1.0)) : 0.0;
  }
}

void allocate_samples(double eps, std::span<std::size_t> n, std::span<double> v, std::span<const double> c,
                      const std::function<double(int, std::size_t)>& refine, const AllocationOptions& options,
                      std::vector<bool>* doubled) {
  if (n.size() != v.size() || n.size() != c.size() || n.empty()) {
    throw DimensionMismatch("allocate_samples: level vectors differ in length");
  }
  if (!(eps > 0.0)) throw DomainError("allocate_samples: tolerance must be positive");
  if (doubled) doubled->assign(n.size(), false);
  const auto total = [&] { return std::accumulate(v.begin(), v.end(), 0.0); };
  std::size_t steps = 0;
  while (total() > eps * eps) {
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t l = 0; l < n.size(); ++l) {
      const double score = v[l] / (static_cast<double>(n[l]) * c[l]);
      if (score > best_score) {
        best_score = score;
        best = l;
      }
    }
    double cost = 0.0;
    for (std::size_t l = 0; l < n.size(); ++l) cost += static_cast<double>(n[l] * (l == best ? 2 : 1)) * c[l];
    if (cost > options.cost_cap) {
      throw BudgetExceeded("sample allocation would exceed the cost cap at level " + std::to_string(best));
    }
    if (++steps > options.max_doublings * n.size()) {
      throw BudgetExceeded("sample allocation did not reach the tolerance within the doubling limit");
    }
    const std::size_t new_n = 2 * n[best];
    v[best] = refine(static_cast<int>(best), new_n);
    n[best] = new_n;
    if (doubled) (*doubled)[best] = true;
  }
}

GradientEstimate estimate_gradient(const LevelHierarchy& hier, Method method, double eps,
                                   const EstimatorOptions& options) {
  const int top = hier.max_level();
  const bool multi = is_multilevel(method);
  const bool lattice = uses_lattice(method);
  const int first = multi ? 0 : top;

  std::vector<LevelSampler> samplers;
  for (int l = first; l <= top; ++l) samplers.emplace_back(hier, l, method, options.shifts, multi, options.sampler);
  const std::size_t count = samplers.size();
  std::vector<std::size_t> n(count);
  std::vector<double> v(count), c(count);
  const std::size_t warm = lattice ? options.warmup_per_shift : options.mc_warmup;
  for (std::size_t k = 0; k < count; ++k) {
    samplers[k].extend_to(warm);
    n[k] = warm;
    v[k] = samplers[k].estimate().variance;
    c[k] = hier.level(first + static_cast<int>(k)).model_cost * (lattice ? static_cast<double>(options.shifts) : 1.0);
  }

  GradientEstimate est;
  est.method = method;
  est.eps = eps;
  est.finest_level = top;
  allocate_samples(
      eps, n, v, c,
      [&](int k, std::size_t new_n) {
        samplers[static_cast<std::size_t>(k)].extend_to(new_n);
        return samplers[static_cast<std::size_t>(k)].estimate().variance;
      },
      options.allocation, &est.doubled);

  const auto& fine = hier.fe().level(top);
  est.mean_q = FeFunction{top, std::vector<double>(fine.dof, 0.0)};
  double total_v = 0.0;
  for (const auto& s : samplers) {
    const auto& le = s.estimate();
    axpy(1.0, hier.fe().prolong_to(le.mean, top).nodal_values, est.mean_q.nodal_values);
    total_v += le.variance;
    est.cost.model += static_cast<double>(le.samples) * le.model_cost;
    est.cost.ce_seconds += le.timing.ce_seconds;
    est.cost.fe_seconds += le.timing.fe_seconds;
    est.levels.push_back(le);
  }
  est.rmse_quadrature = std::sqrt(total_v);
  est.gradient = est.mean_q;
  const auto z = interpolate(fine, hier.objective().z);
  axpy(hier.objective().alpha, z.nodal_values, est.gradient.nodal_values);
  return est;
}

CostLedger cost_ledger(const LevelHierarchy& hier, std::size_t repeats) {
  repeats = std::max<std::size_t>(1, repeats);
  const auto median = [](std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const std::size_t m = x.size() / 2;
    return x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
  };
  CostLedger ledger;
  const std::uint64_t seed = derive_seed({hier.config().seed, 0x636f7374});
  for (int l = 0; l <= hier.max_level(); ++l) {
    std::vector<double> ce(repeats), fe(repeats);
    for (std::size_t k = 0; k < repeats; ++k) {
      const auto y = mc_normals(derive_seed({seed, std::uint64_t(l)}), k, hier.level(l).dimension());
      SampleTiming t;
      coupled_sample(hier, l, y, &t);
      ce[k] = t.ce_seconds;
      fe[k] = t.fe_seconds;
    }
    ledger.levels.push_back(LevelCost{l, median(ce), median(fe), hier.level(l).model_cost});
  }
  std::vector<double> fine(repeats);
  const int top = hier.max_level();
  for (std::size_t k = 0; k < repeats; ++k) {
    const auto y = mc_normals(derive_seed({seed, 0xf1}), k, hier.level(top).dimension());
    SampleTiming t;
    single_sample(hier, top, y, &t);
    fine[k] = t.ce_seconds + t.fe_seconds;
  }
  ledger.finest_sample_seconds = median(fine);
  return ledger;
}

void normalize_cost(GradientEstimate& est, const CostLedger& ledger) {
  est.cost.normalized = (est.cost.ce_seconds + est.cost.fe_seconds) / ledger.finest_sample_seconds;
}

}  // namespace mlqmc
