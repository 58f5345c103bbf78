#include "mlqmc/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mlqmc/errors.hpp"

namespace mlqmc {

using nlohmann::json;

namespace {

// Checks that `j` is an object whose keys are all in `allowed`.
void expect_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_unsigned(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_unsigned()) throw ConfigError(where + "." + key + ": expected a non-negative integer");
  out = static_cast<T>(j.at(key).get<std::uint64_t>());
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const { return config_to_json(*this) == config_to_json(o); }

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "problem1") {
    c.matern = MaternParams{0.1, 1.0, 0.5};
  } else if (name == "problem2") {
    c.matern = MaternParams{0.1, 1.0, 2.5};
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected problem1 or problem2)");
  }
  return c;
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  expect_keys(j, "config",
              {"preset", "problem", "geometry", "embedding", "solver", "qmc", "estimator", "objective", "study",
               "output", "seed", "threads"});
  std::string preset = "problem1";
  read(j, "preset", preset, "config");
  RunConfig c = preset_config(preset);

  if (j.contains("problem")) {
    const auto& p = j["problem"];
    expect_keys(p, "problem", {"sigma2", "lambda_c", "nu", "mean"});
    read(p, "sigma2", c.matern.sigma2, "problem");
    read(p, "lambda_c", c.matern.lambda_c, "problem");
    read(p, "nu", c.matern.nu, "problem");
    read(p, "mean", c.mean, "problem");
  }
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    expect_keys(g, "geometry", {"max_level", "level_limit", "ce_level_offset"});
    read(g, "max_level", c.max_level, "geometry");
    read(g, "level_limit", c.level_limit, "geometry");
    read(g, "ce_level_offset", c.ce_level_offset, "geometry");
  }
  if (j.contains("embedding")) {
    const auto& e = j["embedding"];
    expect_keys(e, "embedding", {"clamp_tolerance", "max_doublings"});
    read(e, "clamp_tolerance", c.embedding.clamp_tolerance, "embedding");
    read(e, "max_doublings", c.embedding.max_doublings, "embedding");
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    expect_keys(s, "solver", {"rel_tolerance", "cap_factor", "jacobi_levels", "smoothing_steps"});
    read(s, "rel_tolerance", c.solver.rel_tolerance, "solver");
    read(s, "cap_factor", c.solver.cap_factor, "solver");
    read(s, "jacobi_levels", c.solver.direct_cg_levels, "solver");
    read(s, "smoothing_steps", c.solver.smoothing_steps, "solver");
  }
  if (j.contains("qmc")) {
    const auto& q = j["qmc"];
    expect_keys(q, "qmc", {"generating_vector", "n_min", "n_max", "shifts", "extension_seed", "warmup_per_shift"});
    std::string path;
    read(q, "generating_vector", path, "qmc");
    if (!path.empty()) {
      c.generating_vector = std::filesystem::path(path).is_absolute() || base_dir.empty() ? std::filesystem::path(path)
                                                                                           : base_dir / path;
    }
    read_unsigned(q, "n_min", c.lattice_n_min, "qmc");
    read_unsigned(q, "n_max", c.lattice_n_max, "qmc");
    read_unsigned(q, "shifts", c.shifts, "qmc");
    read_unsigned(q, "extension_seed", c.extension_seed, "qmc");
    read_unsigned(q, "warmup_per_shift", c.warmup_per_shift, "qmc");
  }
  if (j.contains("estimator")) {
    const auto& e = j["estimator"];
    expect_keys(e, "estimator", {"methods", "eps", "cost_cap", "kappa", "mc_warmup", "low_confidence_below"});
    if (e.contains("methods")) {
      std::vector<std::string> names;
      read(e, "methods", names, "estimator");
      c.methods.clear();
      for (const auto& n : names) c.methods.push_back(parse_method(n));
    }
    read(e, "eps", c.eps, "estimator");
    if (e.contains("cost_cap")) {
      c.cost_cap = e["cost_cap"].is_null() ? std::numeric_limits<double>::infinity() : 0.0;
      if (!e["cost_cap"].is_null()) read(e, "cost_cap", c.cost_cap, "estimator");
    }
    read(e, "kappa", c.kappa, "estimator");
    read_unsigned(e, "mc_warmup", c.mc_warmup, "estimator");
    read_unsigned(e, "low_confidence_below", c.low_confidence_below, "estimator");
  }
  if (j.contains("objective")) {
    const auto& o = j["objective"];
    expect_keys(o, "objective", {"target", "control", "alpha"});
    read(o, "target", c.target, "objective");
    read(o, "control", c.control, "objective");
    read(o, "alpha", c.alpha, "objective");
  }
  if (j.contains("study")) {
    const auto& s = j["study"];
    expect_keys(s, "study", {"n_min", "n_max", "ledger_repeats"});
    read_unsigned(s, "n_min", c.study_n_min, "study");
    read_unsigned(s, "n_max", c.study_n_max, "study");
    read_unsigned(s, "ledger_repeats", c.ledger_repeats, "study");
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    expect_keys(o, "output", {"directory"});
    std::string dir;
    read(o, "directory", dir, "output");
    if (!dir.empty()) c.output_dir = dir;
  }
  read_unsigned(j, "seed", c.seed, "config");
  read_unsigned(j, "threads", c.threads, "config");
  validate(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(method_name(m)));
  return json{
      {"preset", c.preset},
      {"problem", {{"sigma2", c.matern.sigma2}, {"lambda_c", c.matern.lambda_c}, {"nu", c.matern.nu}, {"mean", c.mean}}},
      {"geometry",
       {{"max_level", c.max_level}, {"level_limit", c.level_limit}, {"ce_level_offset", c.ce_level_offset}}},
      {"embedding",
       {{"clamp_tolerance", c.embedding.clamp_tolerance}, {"max_doublings", c.embedding.max_doublings}}},
      {"solver",
       {{"rel_tolerance", c.solver.rel_tolerance},
        {"cap_factor", c.solver.cap_factor},
        {"jacobi_levels", c.solver.direct_cg_levels},
        {"smoothing_steps", c.solver.smoothing_steps}}},
      {"qmc",
       {{"generating_vector", c.generating_vector.string()},
        {"n_min", c.lattice_n_min},
        {"n_max", c.lattice_n_max},
        {"shifts", c.shifts},
        {"extension_seed", c.extension_seed},
        {"warmup_per_shift", c.warmup_per_shift}}},
      {"estimator",
       {{"methods", methods},
        {"eps", c.eps},
        {"cost_cap", std::isinf(c.cost_cap) ? json(nullptr) : json(c.cost_cap)},
        {"kappa", c.kappa},
        {"mc_warmup", c.mc_warmup},
        {"low_confidence_below", c.low_confidence_below}}},
      {"objective", {{"target", c.target}, {"control", c.control}, {"alpha", c.alpha}}},
      {"study", {{"n_min", c.study_n_min}, {"n_max", c.study_n_max}, {"ledger_repeats", c.ledger_repeats}}},
      {"output", {{"directory", c.output_dir.string()}}},
      {"seed", c.seed},
      {"threads", c.threads},
  };
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

void validate(const RunConfig& c) {
  if (!c.matern.valid()) throw ConfigError("problem: sigma2, lambda_c and nu must be positive and finite");
  if (!std::isfinite(c.mean)) throw ConfigError("problem.mean must be finite");
  if (c.max_level < 0 || c.max_level > c.level_limit) {
    throw ConfigError("geometry.max_level must lie in [0, " + std::to_string(c.level_limit) + "]");
  }
  if (c.ce_level_offset < 0 || c.ce_level_offset > 4) throw ConfigError("geometry.ce_level_offset must lie in [0, 4]");
  if (!(c.embedding.clamp_tolerance >= 0.0) || c.embedding.max_doublings < 0) {
    throw ConfigError("embedding: tolerance and doublings must be non-negative");
  }
  if (!(c.solver.rel_tolerance > 0.0) || !(c.solver.cap_factor > 0.0) || c.solver.smoothing_steps < 1) {
    throw ConfigError("solver: tolerance, cap factor and smoothing steps must be positive");
  }
  if (c.shifts < 2) throw ConfigError("qmc.shifts must be at least 2");
  if (c.warmup_per_shift < 1 || c.mc_warmup < 2) throw ConfigError("warm-up sample counts too small");
  if (c.lattice_n_min < 1 || c.lattice_n_max < c.lattice_n_min) throw ConfigError("qmc: bad lattice validity range");
  if (c.methods.empty()) throw ConfigError("estimator.methods must not be empty");
  if (c.eps.empty()) throw ConfigError("estimator.eps must not be empty");
  for (std::size_t k = 0; k < c.eps.size(); ++k) {
    if (!(c.eps[k] > 0.0) || !std::isfinite(c.eps[k])) throw ConfigError("estimator.eps values must be positive");
    if (k > 0 && !(c.eps[k] < c.eps[k - 1])) throw ConfigError("estimator.eps values must be strictly descending");
  }
  if (!(c.cost_cap > 0.0)) throw ConfigError("estimator.cost_cap must be positive");
  if (!(c.kappa > 0.0)) throw ConfigError("estimator.kappa must be positive");
  if (c.target != "indicator" && c.target != "zero") throw ConfigError("objective.target must be indicator or zero");
  if (c.control != "reference" && c.control != "zero") throw ConfigError("objective.control must be reference or zero");
  if (!(c.alpha > 0.0)) throw ConfigError("objective.alpha must be positive");
  if (c.study_n_min < 1 || c.study_n_max < c.study_n_min) throw ConfigError("study: bad N range");
  if ((c.study_n_min & (c.study_n_min - 1)) || (c.study_n_max & (c.study_n_max - 1))) {
    throw ConfigError("study: N range ends must be powers of two");
  }
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
}

std::string config_hash(const RunConfig& c) {
  json j = config_to_json(c);
  j.erase("output");
  j.erase("threads");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

HierarchyConfig hierarchy_config(const RunConfig& c) {
  HierarchyConfig h;
  h.max_level = c.max_level;
  h.ce_level_offset = c.ce_level_offset;
  h.matern = c.matern;
  h.mean = MeanField::constant(c.mean);
  h.embedding = c.embedding;
  h.solver = c.solver;
  h.seed = c.seed;
  h.extension_seed = c.extension_seed;
  h.kappa = c.kappa;
  return h;
}

EstimatorOptions estimator_options(const RunConfig& c) {
  EstimatorOptions o;
  o.shifts = c.shifts;
  o.warmup_per_shift = c.warmup_per_shift;
  o.mc_warmup = c.mc_warmup;
  o.allocation.cost_cap = c.cost_cap;
  o.sampler.threads = c.threads;
  o.sampler.low_confidence_below = c.low_confidence_below;
  return o;
}

TargetAndControl objective(const RunConfig& c) {
  TargetAndControl tc = TargetAndControl::reference(c.alpha);
  const auto zero = TargetAndControl::zero(c.alpha);
  if (c.target == "zero") tc.g = zero.g;
  if (c.control == "zero") tc.z = zero.z;
  return tc;
}

}  // namespace mlqmc
