#include "mlqmc/qmc.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "mlqmc/errors.hpp"
#include "mlqmc/rng.hpp"

namespace mlqmc {

GeneratingVector parse_generating_vector(std::istream& in, std::uint64_t n_min, std::uint64_t n_max) {
  GeneratingVector gv;
  gv.n_min = n_min;
  gv.n_max = n_max;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::vector<long long> values;
    long long v = 0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof() || values.empty() || values.size() > 2) {
      throw ConfigError("generating vector: malformed line " + std::to_string(line_no));
    }
    const long long entry = values.back();
    if (values.size() == 2 && values.front() != static_cast<long long>(gv.entries.size())) {
      throw ConfigError("generating vector: index out of sequence on line " + std::to_string(line_no));
    }
    if (entry < 1 || static_cast<std::uint64_t>(entry) >= n_max) {
      throw ConfigError("generating vector: entry out of range on line " + std::to_string(line_no));
    }
    gv.entries.push_back(static_cast<std::uint32_t>(entry));
  }
  if (gv.entries.empty()) throw ConfigError("generating vector: no entries");
  gv.loaded_prefix = gv.entries.size();
  return gv;
}

GeneratingVector load_generating_vector(const std::filesystem::path& path, std::uint64_t n_min,
                                        std::uint64_t n_max) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open generating vector file " + path.string());
  return parse_generating_vector(in, n_min, n_max);
}

GeneratingVector extend_vector(const GeneratingVector& gv, std::size_t s_needed, std::uint64_t seed) {
  GeneratingVector out = gv;
  if (s_needed <= gv.size()) return out;
  std::mt19937_64 eng(derive_seed({seed, 0x6776ULL}));
  out.entries.reserve(s_needed);
  while (out.entries.size() < s_needed) {
    // 19 random bits -> odd value in [1, 2^20 - 1]
    out.entries.push_back(static_cast<std::uint32_t>(2 * (eng() >> 45) + 1));
  }
  return out;
}

ShiftSet make_shifts(std::size_t count, std::size_t s, std::uint64_t seed) {
  ShiftSet set;
  set.seed = seed;
  set.shifts.resize(count);
  for (std::size_t r = 0; r < count; ++r) {
    std::mt19937_64 eng(derive_seed({seed, 0x5348ULL, r}));
    auto& delta = set.shifts[r];
    delta.resize(s);
    for (auto& d : delta) d = uniform_closed_open(eng);
  }
  return set;
}

void lattice_point(const GeneratingVector& z, std::uint64_t n, std::uint64_t i, std::span<const double> delta,
                   std::span<double> out) {
  if (n == 0 || i < 1 || i > n) throw DomainError("lattice_point: index must lie in [1, N]");
  if (out.size() > z.size() || out.size() > delta.size()) {
    throw DimensionMismatch("lattice_point: generating vector or shift shorter than requested dimension");
  }
  for (std::size_t j = 0; j < out.size(); ++j) {
    const std::uint64_t residue = (i % n) * z.entries[j] % n;
    double v = static_cast<double>(residue) / static_cast<double>(n) + delta[j];
    if (v >= 1.0) v -= 1.0;
    out[j] = v;
  }
}

std::vector<double> lattice_point(const GeneratingVector& z, std::uint64_t n, std::uint64_t i,
                                  std::span<const double> delta) {
  std::vector<double> out(delta.size());
  lattice_point(z, n, i, delta, out);
  return out;
}

double clamp_unit(double xi) {
  constexpr double lo = 0x1.0p-53;
  constexpr double hi = 1.0 - 0x1.0p-53;
  return xi < lo ? lo : (xi > hi ? hi : xi);
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("inverse_normal_cdf: argument must lie in (0, 1)");
  static const boost::math::normal_distribution<double> standard;
  if (p > 0.5) return -boost::math::quantile(standard, 1.0 - p);
  return boost::math::quantile(standard, p);
}

void to_normal(std::span<const double> xi, std::span<double> y) {
  if (xi.size() != y.size()) throw DimensionMismatch("to_normal: size mismatch");
  for (std::size_t j = 0; j < xi.size(); ++j) y[j] = inverse_normal_cdf(xi[j]);
}

std::vector<double> to_normal(std::span<const double> xi) {
  std::vector<double> y(xi.size());
  to_normal(xi, y);
  return y;
}

std::vector<double> assign_dimensions(std::span<const std::size_t> order, std::span<const double> y) {
  if (order.size() != y.size()) throw DimensionMismatch("assign_dimensions: size mismatch");
  std::vector<double> out(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) out[order[j]] = y[j];
  return out;
}

std::vector<double> unassign_dimensions(std::span<const std::size_t> order, std::span<const double> y_modes) {
  if (order.size() != y_modes.size()) throw DimensionMismatch("unassign_dimensions: size mismatch");
  std::vector<double> out(y_modes.size());
  for (std::size_t j = 0; j < y_modes.size(); ++j) out[j] = y_modes[order[j]];
  return out;
}

std::vector<double> assign_dimensions(const CirculantEmbedding& e, std::span<const double> y) {
  return assign_dimensions(e.importance_order, y);
}

}  // namespace mlqmc
