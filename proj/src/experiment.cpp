#include "mlqmc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "mlqmc/errors.hpp"

namespace mlqmc {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path resolve_output_dir(const RunConfig& c, const std::optional<fs::path>& cli_out) {
  if (cli_out) return *cli_out;
  if (const char* env = std::getenv("MLQMC_OUTPUT_DIR"); env && *env) return env;
  return c.output_dir;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  const double den = n * sxx - sx * sx;
  return den == 0.0 ? std::nan("") : (n * sxy - sx * sy) / den;
}

std::string gradient_dump(const FeLevel& lev, const FeFunction& f) {
  std::ostringstream os;
  os << "d 2\nnodes_per_axis " << lev.nodes_per_axis << "\nlevel " << lev.level << "\n";
  for (double v : f.nodal_values) os << format_double(v) << '\n';
  return os.str();
}

std::string gradient_csv(const FeLevel& lev, const FeFunction& f) {
  std::ostringstream os;
  os << "x1,x2,value\n";
  for (std::size_t i = 0; i < lev.dof; ++i) {
    const auto p = lev.node(i);
    os << format_double(p[0]) << ',' << format_double(p[1]) << ',' << format_double(f.nodal_values[i]) << '\n';
  }
  return os.str();
}

json estimate_record(const LevelHierarchy& hier, const GradientEstimate& est) {
  json levels = json::array();
  for (std::size_t k = 0; k < est.levels.size(); ++k) {
    const auto& le = est.levels[k];
    levels.push_back({{"ell", le.ell},
                      {"n", le.n},
                      {"shifts", le.shifts},
                      {"variance", le.variance},
                      {"model_cost", le.model_cost},
                      {"samples", le.samples},
                      {"low_confidence", le.low_confidence},
                      {"doubled", k < est.doubled.size() && est.doubled[k]},
                      {"stochastic_dimension", hier.level(le.ell).dimension()},
                      {"fe_nodes", hier.fe().level(le.ell).dof},
                      {"solver_iterations", le.timing.solver_iterations},
                      {"timing", {{"ce_seconds", le.timing.ce_seconds}, {"fe_seconds", le.timing.fe_seconds}}}});
  }
  return {{"method", std::string(method_name(est.method))},
          {"eps", est.eps},
          {"finest_level", est.finest_level},
          {"rmse_quadrature", est.rmse_quadrature},
          {"model_cost", est.cost.model},
          {"levels", levels},
          {"mean_q", est.mean_q.nodal_values},
          {"gradient", est.gradient.nodal_values},
          {"timing",
           {{"ce_seconds", est.cost.ce_seconds},
            {"fe_seconds", est.cost.fe_seconds},
            {"normalized_cost", est.cost.normalized}}}};
}

json without_timing(json j) {
  if (j.is_object()) {
    j.erase("timing");
    for (auto& item : j.items()) item.value() = without_timing(item.value());
  } else if (j.is_array()) {
    for (auto& v : j) v = without_timing(v);
  }
  return j;
}

LevelHierarchy build_hierarchy(const RunConfig& c) {
  const auto gv = load_generating_vector(c.generating_vector, c.lattice_n_min, c.lattice_n_max);
  return LevelHierarchy(hierarchy_config(c), gv, objective(c));
}

namespace {

json hierarchy_json(const LevelHierarchy& hier) {
  json levels = json::array();
  for (int l = 0; l <= hier.max_level(); ++l) {
    const auto& lev = hier.level(l);
    levels.push_back({{"ell", l},
                      {"ce_points_per_axis", lev.embedding.grid.points_per_axis},
                      {"ce_extension_per_axis", lev.embedding.ext()},
                      {"padding_doublings", lev.embedding.doublings},
                      {"clamped", lev.embedding.clamped},
                      {"stochastic_dimension", lev.dimension()},
                      {"fe_nodes", hier.fe().level(l).dof},
                      {"fe_interior_nodes", hier.fe().level(l).interior_dof()},
                      {"mesh_width", hier.fe().level(l).h},
                      {"lattice_prefix", lev.lattice.loaded_prefix},
                      {"model_cost", lev.model_cost}});
  }
  return levels;
}

json seeds_json(const LevelHierarchy& hier) {
  json levels = json::array();
  for (int l = 0; l <= hier.max_level(); ++l) {
    levels.push_back({{"ell", l},
                      {"lattice_shifts", hier.stream_seed(Method::MLQMC, l)},
                      {"mc_stream", hier.stream_seed(Method::MLMC, l)},
                      {"vector_extension", hier.extension_seed(l)}});
  }
  return {{"master", hier.config().seed}, {"extension", hier.config().extension_seed}, {"levels", levels}};
}

json base_manifest(const RunConfig& c, const LevelHierarchy& hier, const std::string& study) {
  return {{"study", study},
          {"config_hash", config_hash(c)},
          {"config", config_to_json(c)},
          {"seeds", seeds_json(hier)},
          {"hierarchy", hierarchy_json(hier)}};
}

json ledger_json(const CostLedger& ledger) {
  json levels = json::array();
  for (const auto& l : ledger.levels) {
    levels.push_back({{"ell", l.ell}, {"ce_seconds", l.ce_seconds}, {"fe_seconds", l.fe_seconds}, {"model", l.model}});
  }
  return {{"levels", levels}, {"finest_sample_seconds", ledger.finest_sample_seconds}};
}

std::string eps_tag(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", eps);
  return buf;
}

fs::path cache_file(const RunConfig& c, const fs::path& out, Method m, double eps) {
  return out / "cache" / config_hash(c) / (std::string(method_name(m)) + "_" + eps_tag(eps) + ".json");
}

// Runs (or loads from the resume cache) one estimator at one tolerance.
json run_cached(const RunConfig& c, const LevelHierarchy& hier, const CostLedger& ledger, const fs::path& out,
                Method m, double eps) {
  const fs::path path = cache_file(c, out, m, eps);
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      return json::parse(in);
    } catch (const json::parse_error&) {
      // unreadable cache entries are recomputed
    }
  }
  GradientEstimate est = estimate_gradient(hier, m, eps, estimator_options(c));
  normalize_cost(est, ledger);
  json rec = estimate_record(hier, est);
  if (uses_lattice(m)) {
    for (const auto& le : est.levels) {
      if (le.n > c.lattice_n_max) {
        std::cerr << "warning: level " << le.ell << " uses N = " << le.n
                  << " points, beyond the generating vector's validity range\n";
        rec["warnings"].push_back("N beyond generating-vector range at level " + std::to_string(le.ell));
      }
    }
  }
  write_atomic(path, rec.dump());
  return rec;
}

json summary_of(json rec) {
  rec.erase("mean_q");
  rec.erase("gradient");
  return rec;
}

FeFunction field_of(const json& rec, const char* key) {
  return FeFunction{rec.at("finest_level").get<int>(), rec.at(key).get<std::vector<double>>()};
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& c, const fs::path& out) {
  const auto hier = build_hierarchy(c);
  const auto ledger = cost_ledger(hier, c.ledger_repeats);
  ExperimentResult res;
  res.manifest = base_manifest(c, hier, "run");
  res.manifest["timing"] = ledger_json(ledger);
  res.manifest["runs"] = json::array();

  std::ostringstream results, levels;
  results << "method,eps,rmse,model_cost,normalized_cost,ce_seconds,fe_seconds\n";
  levels << "method,eps,ell,n,shifts,variance,model_cost,low_confidence,stochastic_dimension,fe_nodes\n";
  for (Method m : c.methods) {
    for (double eps : c.eps) {
      json rec = run_cached(c, hier, ledger, out, m, eps);
      const auto& t = rec["timing"];
      results << method_name(m) << ',' << format_double(eps) << ',' << format_double(rec["rmse_quadrature"].get<double>())
              << ',' << format_double(rec["model_cost"].get<double>()) << ','
              << format_double(t["normalized_cost"].get<double>()) << ','
              << format_double(t["ce_seconds"].get<double>()) << ',' << format_double(t["fe_seconds"].get<double>())
              << '\n';
      for (const auto& le : rec["levels"]) {
        levels << method_name(m) << ',' << format_double(eps) << ',' << le["ell"].get<int>() << ','
               << le["n"].get<std::size_t>() << ',' << le["shifts"].get<std::size_t>() << ','
               << format_double(le["variance"].get<double>()) << ',' << format_double(le["model_cost"].get<double>())
               << ',' << (le["low_confidence"].get<bool>() ? 1 : 0) << ','
               << le["stochastic_dimension"].get<std::size_t>() << ',' << le["fe_nodes"].get<std::size_t>() << '\n';
      }
      res.manifest["runs"].push_back(summary_of(rec));
      res.records.push_back(std::move(rec));
    }
    const auto& last = res.records.back();
    const auto& fine = hier.fe().level(hier.max_level());
    const std::string stem = "gradient_" + std::string(method_name(m));
    write_atomic(out / (stem + ".txt"), gradient_dump(fine, field_of(last, "gradient")));
    write_atomic(out / (stem + ".csv"), gradient_csv(fine, field_of(last, "gradient")));
  }
  write_atomic(out / "results.csv", results.str());
  write_atomic(out / "levels.csv", levels.str());
  write_atomic(out / "manifest.json", res.manifest.dump(2) + "\n");
  return res;
}

VarianceStudy variance_study(const RunConfig& c, const fs::path& out) {
  const auto hier = build_hierarchy(c);
  SamplerOptions so;
  so.threads = c.threads;
  so.low_confidence_below = c.low_confidence_below;
  VarianceStudy study;
  std::ostringstream rows, slopes;
  rows << "ell,n,shifts,r_times_v\n";
  slopes << "ell,slope,lambda\n";
  json manifest = base_manifest(c, hier, "variance-study");
  json timing = json::array();
  std::vector<double> logh, logm, logvl;
  for (int l = 0; l <= hier.max_level(); ++l) {
    LevelSampler sampler(hier, l, Method::MLQMC, c.shifts, true, so);
    std::vector<double> logn, logv;
    for (std::size_t n = c.study_n_min; n <= c.study_n_max; n *= 2) {
      sampler.extend_to(n);
      const double rv = static_cast<double>(c.shifts) * sampler.estimate().variance;
      study.rows.push_back({l, n, c.shifts, rv});
      rows << l << ',' << n << ',' << c.shifts << ',' << format_double(rv) << '\n';
      if (rv > 0.0) {
        logn.push_back(std::log(static_cast<double>(n)));
        logv.push_back(std::log(rv));
      }
    }
    const double slope = logn.size() >= 2 ? fitted_slope(logn, logv) : std::nan("");
    study.slopes.push_back(slope);
    study.mean_norms.push_back(l2_norm(hier.fe().level(l), sampler.estimate().mean));
    if (l >= 1) {
      logh.push_back(std::log(hier.fe().level(l).h));
      logm.push_back(std::log(study.mean_norms.back()));
      logvl.push_back(std::log(sampler.estimate().variance));
    }
    slopes << l << ',' << format_double(slope) << ',' << format_double(-1.0 / slope) << '\n';
    timing.push_back({{"ell", l},
                      {"ce_seconds", sampler.estimate().timing.ce_seconds},
                      {"fe_seconds", sampler.estimate().timing.fe_seconds}});
  }
  const auto finite = [](const std::vector<double>& y) {
    return std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
  };
  if (logh.size() >= 2 && finite(logm)) study.rho = fitted_slope(logh, logm);
  if (logh.size() >= 2 && finite(logvl)) study.phi = fitted_slope(logh, logvl);
  std::ostringstream decay;
  decay << "ell,h,mean_correction_l2,variance\n";
  for (int l = 0; l <= hier.max_level(); ++l) {
    double v = std::nan("");
    for (const auto& row : study.rows) {
      if (row.ell == l) v = row.r_times_v / static_cast<double>(row.shifts);
    }
    decay << l << ',' << format_double(hier.fe().level(l).h) << ','
          << format_double(study.mean_norms[static_cast<std::size_t>(l)]) << ',' << format_double(v) << '\n';
  }
  const auto nullable = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  manifest["slopes"] = json::array();
  for (double s : study.slopes) manifest["slopes"].push_back(nullable(s));
  manifest["rho"] = nullable(study.rho);
  manifest["phi"] = nullable(study.phi);
  manifest["timing"] = timing;
  write_atomic(out / "variance_study.csv", rows.str());
  write_atomic(out / "variance_slopes.csv", slopes.str());
  write_atomic(out / "level_decay.csv", decay.str());
  write_atomic(out / "manifest_variance.json", manifest.dump(2) + "\n");
  return study;
}

CostCurve cost_curve(const RunConfig& c, const fs::path& out) {
  const auto hier = build_hierarchy(c);
  CostCurve curve;
  curve.ledger = cost_ledger(hier, c.ledger_repeats);
  json manifest = base_manifest(c, hier, "cost-curve");
  manifest["timing"] = ledger_json(curve.ledger);
  manifest["runs"] = json::array();

  std::ostringstream rows, exps, lc;
  rows << "method,eps,normalized_cost,model_cost,rmse\n";
  for (Method m : {Method::MLQMC, Method::QMC, Method::MLMC, Method::MC}) {
    std::vector<double> loge, logc, logm;
    for (double eps : c.eps) {
      const json rec = run_cached(c, hier, curve.ledger, out, m, eps);
      const CostRow row{m, eps, rec["timing"]["normalized_cost"].get<double>(), rec["model_cost"].get<double>(),
                        rec["rmse_quadrature"].get<double>()};
      curve.rows.push_back(row);
      rows << method_name(m) << ',' << format_double(eps) << ',' << format_double(row.normalized_cost) << ','
           << format_double(row.model_cost) << ',' << format_double(row.rmse) << '\n';
      loge.push_back(std::log(eps));
      logc.push_back(std::log(row.normalized_cost));
      logm.push_back(std::log(row.model_cost));
      manifest["runs"].push_back(summary_of(rec));
    }
    curve.exponents.emplace_back(m, -fitted_slope(loge, logc));
    curve.model_exponents.emplace_back(m, -fitted_slope(loge, logm));
  }
  exps << "method,exponent,model_exponent\n";
  for (std::size_t k = 0; k < curve.exponents.size(); ++k) {
    exps << method_name(curve.exponents[k].first) << ',' << format_double(curve.exponents[k].second) << ','
         << format_double(curve.model_exponents[k].second) << '\n';
  }
  lc << "ell,ce_seconds,fe_seconds,total_seconds,model_cost,stochastic_dimension,fe_nodes\n";
  for (const auto& l : curve.ledger.levels) {
    lc << l.ell << ',' << format_double(l.ce_seconds) << ',' << format_double(l.fe_seconds) << ','
       << format_double(l.ce_seconds + l.fe_seconds) << ',' << format_double(l.model) << ','
       << hier.level(l.ell).dimension() << ',' << hier.fe().level(l.ell).dof << '\n';
  }
  write_atomic(out / "cost_curve.csv", rows.str());
  write_atomic(out / "cost_exponents.csv", exps.str());
  write_atomic(out / "level_cost.csv", lc.str());
  write_atomic(out / "manifest_cost_curve.json", manifest.dump(2) + "\n");
  return curve;
}

void dump_gradient(const RunConfig& c, const fs::path& out) {
  const auto hier = build_hierarchy(c);
  const auto ledger = cost_ledger(hier, c.ledger_repeats);
  const json rec = run_cached(c, hier, ledger, out, c.methods.front(), c.eps.back());
  const auto& fine = hier.fe().level(hier.max_level());
  write_atomic(out / "gradient.txt", gradient_dump(fine, field_of(rec, "gradient")));
  write_atomic(out / "gradient.csv", gradient_csv(fine, field_of(rec, "gradient")));
  write_atomic(out / "mean_q.csv", gradient_csv(fine, field_of(rec, "mean_q")));
  write_atomic(out / "target.csv", gradient_csv(fine, interpolate(fine, hier.objective().g)));
  write_atomic(out / "control.csv", gradient_csv(fine, interpolate(fine, hier.objective().z)));
  json manifest = base_manifest(c, hier, "dump-gradient");
  manifest["runs"] = json::array({summary_of(rec)});
  manifest["timing"] = ledger_json(ledger);
  write_atomic(out / "manifest_gradient.json", manifest.dump(2) + "\n");
}

}  // namespace mlqmc
