// Acceptance checks. Prints one PASS/FAIL line per criterion; with arguments,
// runs only the listed criteria. Exit status is nonzero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mlqmc/circulant_field.hpp"
#include "mlqmc/config.hpp"
#include "mlqmc/covariance.hpp"
#include "mlqmc/estimators.hpp"
#include "mlqmc/experiment.hpp"
#include "mlqmc/fem.hpp"
#include "mlqmc/qmc.hpp"
#include "mlqmc/rng.hpp"

namespace fs = std::filesystem;
using namespace mlqmc;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

double l2_distance(const FeLevel& lev, const FeFunction& a, const FeFunction& b) {
  FeFunction d = a;
  for (std::size_t i = 0; i < d.nodal_values.size(); ++i) d.nodal_values[i] -= b.nodal_values[i];
  return l2_norm(lev, d);
}

std::vector<double> normals(std::mt19937_64& eng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> y(n);
  for (auto& v : y) v = nd(eng);
  return y;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mlqmc-acceptance-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig desk_problem1() {
  RunConfig c = preset_config("problem1");
  c.max_level = 3;
  return c;
}

// --- 1 ---------------------------------------------------------------------

Outcome matern_closed_forms() {
  double worst = 0.0;
  for (double nu : {0.5, 1.5, 2.5}) {
    const MaternParams p{0.1, 1.0, nu};
    for (int k = 0; k < 1000; ++k) {
      const double r = std::pow(10.0, -6.0 + 7.0 * k / 999.0);
      double exact;
      if (nu == 0.5) {
        exact = p.sigma2 * std::exp(-r / p.lambda_c);
      } else if (nu == 1.5) {
        const double t = std::sqrt(3.0) * r / p.lambda_c;
        exact = p.sigma2 * (1.0 + t) * std::exp(-t);
      } else {
        const double t = std::sqrt(5.0) * r / p.lambda_c;
        exact = p.sigma2 * (1.0 + t + t * t / 3.0) * std::exp(-t);
      }
      worst = std::max(worst, std::abs(matern_cov(p, r) - exact) / exact);
    }
  }
  return {worst <= 1e-10, "max relative error " + fmt(worst)};
}

// --- 2 ---------------------------------------------------------------------

Outcome embedding_exactness() {
  double worst = 0.0;
  bool clamped = false;
  for (double nu : {0.5, 2.5}) {
    const MaternParams p{0.1, 1.0, nu};
    std::vector<UniformGrid> grids;
    for (int n = 2; n <= 9; ++n) grids.emplace_back(1, n);
    for (int n = 2; n <= 5; ++n) grids.emplace_back(2, n);
    for (const auto& g : grids) {
      const auto e = build_embedding(matern_kernel(p), g);
      clamped = clamped || e.clamped;
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < g.size(); ++i) rows.push_back(factor_row(e, i));
      for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double bb = std::inner_product(rows[i].begin(), rows[i].end(), rows[j].begin(), 0.0);
          worst = std::max(worst, std::abs(bb - matern_cov(p, distance(g.point(i), g.point(j)))));
        }
      }
    }
  }
  return {!clamped && worst <= 1e-10,
          std::string(clamped ? "clamping occurred, " : "no clamping, ") + "max |BB^T - Sigma| " + fmt(worst)};
}

// --- 3 ---------------------------------------------------------------------

Outcome sampling_statistics() {
  const RunConfig c = desk_problem1();
  const UniformGrid g(2, 5);
  const auto e = build_embedding(matern_kernel(c.matern), g);
  const std::size_t m = g.size();
  const int n = 10000;
  std::mt19937_64 eng(2024);
  std::vector<std::vector<double>> z;
  z.reserve(n);
  for (int k = 0; k < n; ++k) z.push_back(sample_field(e, MeanField::constant(c.mean), normals(eng, e.s)).log_values);
  std::vector<double> mean(m, 0.0);
  for (const auto& s : z) {
    for (std::size_t i = 0; i < m; ++i) mean[i] += s[i] / n;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (const auto& s : z) acc += (s[i] - mean[i]) * (s[j] - mean[j]);
      const double emp = acc / (n - 1);
      const double sij = matern_cov(c.matern, distance(g.point(i), g.point(j)));
      const double sii = matern_cov(c.matern, 0.0);
      const double se = std::sqrt((sii * sii + sij * sij) / n);
      worst = std::max(worst, std::abs(emp - sij) / se);
    }
  }
  return {worst <= 4.0, "largest deviation " + fmt(worst) + " standard errors over " + std::to_string(m * m) + " entries"};
}

// --- 4 ---------------------------------------------------------------------

Outcome nesting() {
  const auto hier = build_hierarchy(desk_problem1());
  std::mt19937_64 eng(77);
  std::size_t mismatches = 0, checked = 0;
  for (int l = 1; l <= 3; ++l) {
    const auto& fine = hier.level(l).embedding;
    const auto& coarse = hier.level(l - 1).embedding.grid;
    const int ratio = (fine.grid.points_per_axis - 1) / (coarse.points_per_axis - 1);
    for (int k = 0; k < 100; ++k) {
      const auto f = sample_field(fine, hier.config().mean, normals(eng, fine.s), l);
      const auto r = restrict_to_coarse(f, coarse);
      for (std::size_t i = 0; i < coarse.size(); ++i) {
        const auto mi = coarse.multi_index(i);
        const std::size_t fi = static_cast<std::size_t>(ratio * mi[0]) +
                               static_cast<std::size_t>(fine.grid.points_per_axis) * static_cast<std::size_t>(ratio * mi[1]);
        const auto x = coarse.point(i);
        ++checked;
        if (r.log_values[i] != f.log_values[fi] || r.values[i] != f.values[fi] || r.values[i] != eval_field(f, x)) {
          ++mismatches;
        }
      }
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in " + std::to_string(checked) + " coarse nodes"};
}

// --- 5 ---------------------------------------------------------------------

Outcome fe_convergence() {
  constexpr double pi = 3.14159265358979323846;
  const auto exact = [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); };
  const auto rhs = [&](double x, double y) { return 2.0 * pi * pi * exact(x, y); };
  const FeHierarchy fe(4);
  const auto unit = constant_field(UniformGrid(2, 2), 1.0);
  // independent degree-4 triangle rule
  const double a1 = 0.445948490915965, w1 = 0.223381589678011;
  const double a2 = 0.091576213509771, w2 = 0.109951743655322;
  const double bary[6][3] = {{a1, a1, 1 - 2 * a1}, {a1, 1 - 2 * a1, a1}, {1 - 2 * a1, a1, a1},
                             {a2, a2, 1 - 2 * a2}, {a2, 1 - 2 * a2, a2}, {1 - 2 * a2, a2, a2}};
  const double wts[6] = {w1, w1, w1, w2, w2, w2};
  std::vector<double> logh, loge;
  double worst_residual = 0.0;
  for (int l = 1; l <= 4; ++l) {
    SolveStats st;
    const auto u = solve_state(fe, l, unit, rhs, &st);
    worst_residual = std::max(worst_residual, st.relative_residual);
    const auto& lev = fe.level(l);
    double sum = 0.0;
    for (const auto& tri : lev.triangles) {
      const auto p0 = lev.node(tri[0]), p1 = lev.node(tri[1]), p2 = lev.node(tri[2]);
      for (int q = 0; q < 6; ++q) {
        const double x = bary[q][0] * p0[0] + bary[q][1] * p1[0] + bary[q][2] * p2[0];
        const double y = bary[q][0] * p0[1] + bary[q][1] * p1[1] + bary[q][2] * p2[1];
        const double uh = bary[q][0] * u.nodal_values[tri[0]] + bary[q][1] * u.nodal_values[tri[1]] +
                          bary[q][2] * u.nodal_values[tri[2]];
        sum += wts[q] * 0.5 * lev.h * lev.h * (uh - exact(x, y)) * (uh - exact(x, y));
      }
    }
    logh.push_back(std::log(lev.h));
    loge.push_back(0.5 * std::log(sum));
  }
  const double order = fitted_slope(logh, loge);
  return {std::abs(order - 2.0) <= 0.2 && worst_residual <= 1e-10,
          "L2 order " + fmt(order) + ", worst relative residual " + fmt(worst_residual)};
}

// --- 6 ---------------------------------------------------------------------

Outcome qmc_rate() {
  const auto gv = load_generating_vector(MLQMC_DATA_DIR "/lattice-cbc-8-16384.256.txt", 8, 16384);
  const std::size_t s = 4, reps = 256;
  const auto f = [](std::span<const double> x) {
    double p = 1.0;
    for (double v : x) p *= 1.0 + 0.1 * (v - 0.5);
    return p;
  };
  const auto mean_var = [](const std::vector<double>& v) {
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double t : v) acc += (t - mu) * (t - mu);
    return std::pair{mu, acc / static_cast<double>(v.size() - 1)};
  };
  std::mt19937_64 eng(2718);
  std::vector<double> logn, log_qmc, log_mc, x(s);
  double worst_bias = 0.0;
  for (int m = 6; m <= 12; ++m) {
    const std::uint64_t n = std::uint64_t{1} << m;
    const auto shifts = make_shifts(reps, s, derive_seed({31, static_cast<std::uint64_t>(m)}));
    std::vector<double> qv(reps), mv(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      double sq = 0.0, sm = 0.0;
      for (std::uint64_t i = 1; i <= n; ++i) {
        lattice_point(gv, n, i, shifts.shifts[r], x);
        sq += f(x);
        for (auto& v : x) v = uniform_closed_open(eng);
        sm += f(x);
      }
      qv[r] = sq / static_cast<double>(n);
      mv[r] = sm / static_cast<double>(n);
    }
    const auto [qmu, qvar] = mean_var(qv);
    worst_bias = std::max(worst_bias, std::abs(qmu - 1.0) / std::sqrt(qvar / reps));
    logn.push_back(std::log(static_cast<double>(n)));
    log_qmc.push_back(std::log(qvar));
    log_mc.push_back(std::log(mean_var(mv).second));
  }
  const double sq = fitted_slope(logn, log_qmc), sm = fitted_slope(logn, log_mc);
  return {worst_bias <= 4.0 && sq <= -1.5 && std::abs(sm + 1.0) <= 0.15,
          "lattice bias " + fmt(worst_bias) + " SE, lattice slope " + fmt(sq) + ", iid slope " + fmt(sm)};
}

// --- 7, 8 ------------------------------------------------------------------

const VarianceStudy& study() {
  static const VarianceStudy s = [] {
    RunConfig c = desk_problem1();
    c.study_n_min = 8;
    c.study_n_max = 512;
    return variance_study(c, scratch("variance"));
  }();
  return s;
}

Outcome variance_in_n() {
  const auto& s = study();
  bool ok = true;
  std::string detail = "slopes";
  for (int l = 1; l <= 3; ++l) {
    const double slope = s.slopes[static_cast<std::size_t>(l)];
    ok = ok && slope <= -1.1;
    detail += " l" + std::to_string(l) + "=" + fmt(slope);
  }
  return {ok, detail + " (l0=" + fmt(s.slopes[0]) + ")"};
}

Outcome variance_in_level() {
  std::vector<double> v(4, std::nan(""));
  for (const auto& row : study().rows) {
    if (row.n == 64) v[static_cast<std::size_t>(row.ell)] = row.r_times_v / static_cast<double>(row.shifts);
  }
  const bool monotone = v[2] < v[1] && v[3] < v[2];
  const double ratio = v[3] / v[1];
  return {monotone && ratio <= 0.1, "V at N=64: " + fmt(v[1]) + ", " + fmt(v[2]) + ", " + fmt(v[3]) +
                                        "; V3/V1 = " + fmt(ratio) + " (fitted phi at N=512 " + fmt(study().phi) +
                                        ", rho " + fmt(study().rho) + ")"};
}

// --- 9 ---------------------------------------------------------------------

Outcome allocation_contract() {
  // real runs: every method and tolerance of the cost study, plus a 3-level hierarchy
  std::size_t runs = 0, violations = 0;
  double worst_real = 0.0;
  for (int L : {2, 3}) {
    RunConfig c = desk_problem1();
    c.max_level = L;
    const auto hier = build_hierarchy(c);
    for (Method m : {Method::MLQMC, Method::QMC, Method::MLMC, Method::MC}) {
      for (double eps : {1e-2, 3e-3, 1e-3, 3e-4}) {
        const auto est = estimate_gradient(hier, m, eps, estimator_options(c));
        double sum = 0.0;
        for (const auto& le : est.levels) sum += le.variance;
        ++runs;
        if (sum > eps * eps) ++violations;
        worst_real = std::max(worst_real, sum / (eps * eps));
      }
    }
  }

  // synthetic V(N) = a / N
  std::mt19937_64 eng(4242);
  std::uniform_real_distribution<double> logu(-3.0, 3.0);
  double worst_ratio = 0.0;
  bool synthetic_sum_ok = true;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t levels = 2 + static_cast<std::size_t>(trial % 5);
    std::vector<double> a(levels), cst(levels), v(levels);
    std::vector<std::size_t> n(levels, 1);
    for (std::size_t l = 0; l < levels; ++l) {
      a[l] = std::pow(10.0, logu(eng));
      cst[l] = std::pow(10.0, logu(eng));
      v[l] = a[l];
    }
    const double eps = std::sqrt(std::accumulate(a.begin(), a.end(), 0.0)) * std::pow(10.0, -1.0 - 0.004 * trial);
    std::vector<bool> doubled;
    allocate_samples(
        eps, n, v, cst, [&](int l, std::size_t k) { return a[static_cast<std::size_t>(l)] / static_cast<double>(k); },
        {}, &doubled);
    synthetic_sum_ok = synthetic_sum_ok && std::accumulate(v.begin(), v.end(), 0.0) <= eps * eps;
    double top = 0.0, bottom = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < levels; ++l) {
      const double score = v[l] / (static_cast<double>(n[l]) * cst[l]);
      top = std::max(top, score);
      if (doubled[l]) bottom = std::min(bottom, score);
    }
    if (std::isfinite(bottom)) worst_ratio = std::max(worst_ratio, top / bottom);
  }
  const bool pass = violations == 0 && synthetic_sum_ok && worst_ratio <= 2.0;
  return {pass, std::to_string(violations) + "/" + std::to_string(runs) + " real runs above eps^2 (max sum V/eps^2 " +
                    fmt(worst_real) + "); synthetic worst max/min score ratio " + fmt(worst_ratio) + " (bound 2)"};
}

// --- 10 --------------------------------------------------------------------

Outcome method_ranking() {
  RunConfig c = desk_problem1();
  c.eps = {1e-2, 3e-3, 1e-3, 3e-4};
  const auto curve = cost_curve(c, scratch("cost"));
  std::map<Method, double> ex, mex, smallest;
  for (const auto& [m, e] : curve.exponents) ex[m] = e;
  for (const auto& [m, e] : curve.model_exponents) mex[m] = e;
  for (const auto& row : curve.rows) {
    if (row.eps == c.eps.back()) smallest[row.method] = row.normalized_cost;
  }
  // All runs share the finest level, so single-level QMC carries no extra
  // level penalty here and is held to the same bound as MLQMC.
  const bool exps_ok = ex[Method::MLQMC] <= 1.7 && ex[Method::QMC] <= 1.7 &&
                       ex[Method::MC] >= 1.7 && ex[Method::MC] <= 2.3 &&
                       ex[Method::MLMC] >= 1.7 && ex[Method::MLMC] <= 2.3;
  const bool rank_ok = smallest[Method::MLQMC] < smallest[Method::MLMC] && smallest[Method::MLQMC] < smallest[Method::QMC];
  std::string detail = "exponents";
  for (Method m : {Method::MLQMC, Method::QMC, Method::MLMC, Method::MC}) {
    detail += " " + std::string(method_name(m)) + "=" + fmt(ex[m]) + " (model " + fmt(mex[m]) + ")";
  }
  detail += "; cost at eps=3e-4";
  for (Method m : {Method::MLQMC, Method::QMC, Method::MLMC, Method::MC}) {
    detail += " " + std::string(method_name(m)) + "=" + fmt(smallest[m]);
  }
  return {exps_ok && rank_ok, detail};
}

// --- 11 --------------------------------------------------------------------

Outcome telescoping() {
  RunConfig c = desk_problem1();
  c.max_level = 1;
  const auto toy = build_hierarchy(c);
  std::mt19937_64 eng(11);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto y = normals(eng, toy.level(1).dimension());
    const auto a1 = sample_field(toy.level(1).embedding, toy.config().mean, y, 1);
    const auto q0 = adjoint_solution(toy, 0, restrict_to_coarse(a1, toy.level(0).embedding.grid));
    const auto d1 = coupled_sample(toy, 1, y);
    auto sum = prolong(q0, toy.fe().level(1));
    for (std::size_t i = 0; i < sum.nodal_values.size(); ++i) sum.nodal_values[i] += d1.nodal_values[i];
    worst = std::max(worst, l2_distance(toy.fe().level(1), sum, single_sample(toy, 1, y)));
  }

  RunConfig c2 = desk_problem1();
  c2.max_level = 2;
  const auto hier = build_hierarchy(c2);
  const auto ml = estimate_gradient(hier, Method::MLQMC, 1e-4, estimator_options(c2));
  c2.seed = 2;
  const auto ref_hier = build_hierarchy(c2);
  const auto ref = estimate_gradient(ref_hier, Method::QMC, 2e-5, estimator_options(c2));
  const double gap = l2_distance(hier.fe().level(2), ml.mean_q, ref.mean_q);
  const double combined = std::hypot(ml.rmse_quadrature, ref.rmse_quadrature);
  return {worst <= 1e-8 && gap <= 3.0 * combined, "pathwise L2 defect " + fmt(worst) + "; MLQMC vs QMC gap " +
                                                      fmt(gap) + " vs 3x combined RMSE " + fmt(3.0 * combined)};
}

// --- 12 --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  RunConfig c = desk_problem1();
  c.methods = {Method::MLQMC, Method::QMC, Method::MLMC, Method::MC};
  c.eps = {3e-4};
  const fs::path a = scratch("det-a"), b = scratch("det-b");
  run_experiment(c, a);
  run_experiment(c, b);
  const auto ma = without_timing(nlohmann::json::parse(slurp(a / "manifest.json")));
  const auto mb = without_timing(nlohmann::json::parse(slurp(b / "manifest.json")));
  bool same = ma == mb;
  std::size_t files = 0;
  for (Method m : c.methods) {
    for (const char* ext : {".txt", ".csv"}) {
      const std::string name = "gradient_" + std::string(method_name(m)) + ext;
      same = same && fs::exists(a / name) && slurp(a / name) == slurp(b / name);
      ++files;
    }
  }
  return {same, std::string(ma == mb ? "manifests equal" : "manifests differ") + " without timing; " +
                    std::to_string(files) + " gradient dumps compared"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"covariance closed forms", matern_closed_forms},
      {"circulant embedding exactness", embedding_exactness},
      {"circulant sampling statistics", sampling_statistics},
      {"nesting of level fields", nesting},
      {"finite element convergence", fe_convergence},
      {"lattice rule bias and rate", qmc_rate},
      {"variance decay in N", variance_in_n},
      {"variance decay across levels", variance_in_level},
      {"allocation contract", allocation_contract},
      {"method cost ranking", method_ranking},
      {"telescoping consistency", telescoping},
      {"determinism", determinism},
  };
  std::vector<int> selected;
  for (int k = 1; k < argc; ++k) selected.push_back(std::stoi(argv[k]));
  if (selected.empty()) {
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);
  }

  int failed = 0;
  for (int k : selected) {
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "no criterion " << k << "\n";
      return 2;
    }
    const auto& [name, check] = criteria[static_cast<std::size_t>(k - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %-32s %s  %s [%.1f s]\n", k, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
