#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "mlqmc/circulant_field.hpp"

namespace mlqmc {

/// Generating vector of a rank-1 lattice rule. The first `loaded_prefix`
/// entries come from a file; the rest are seeded random odd integers.
struct GeneratingVector {
  std::vector<std::uint32_t> entries;
  std::uint64_t n_min = 1;
  std::uint64_t n_max = std::uint64_t{1} << 20;
  std::size_t loaded_prefix = 0;

  std::size_t size() const { return entries.size(); }
};

/// Parses either one integer per line or "index value" pairs; '#' lines are
/// comments.
GeneratingVector parse_generating_vector(std::istream& in, std::uint64_t n_min, std::uint64_t n_max);
GeneratingVector load_generating_vector(const std::filesystem::path& path, std::uint64_t n_min, std::uint64_t n_max);

/// Upper bound (exclusive) of the random extension entries.
inline constexpr std::uint32_t kExtensionModulus = 1u << 20;

/// Appends odd integers drawn uniformly from [1, 2^20 - 1] until `s_needed`
/// entries exist. Pure function of (gv, s_needed, seed).
GeneratingVector extend_vector(const GeneratingVector& gv, std::size_t s_needed, std::uint64_t seed);

struct ShiftSet {
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> shifts;

  std::size_t size() const { return shifts.size(); }
};

/// R uniform shifts in [0,1)^s; shift r is a pure function of (seed, r).
ShiftSet make_shifts(std::size_t count, std::size_t s, std::uint64_t seed);

/// frac(i z / N + delta), lattice part in exact integer arithmetic. Writes
/// `out.size()` components.
void lattice_point(const GeneratingVector& z, std::uint64_t n, std::uint64_t i, std::span<const double> delta,
                   std::span<double> out);
std::vector<double> lattice_point(const GeneratingVector& z, std::uint64_t n, std::uint64_t i,
                                  std::span<const double> delta);

/// Clamps into [2^-53, 1 - 2^-53] so the inverse normal CDF stays finite.
double clamp_unit(double xi);

double inverse_normal_cdf(double p);
void to_normal(std::span<const double> xi, std::span<double> y);
std::vector<double> to_normal(std::span<const double> xi);

/// Maps normals in QMC coordinate order to CE mode order: coordinate j drives
/// the mode with the j-th largest eigenvalue.
std::vector<double> assign_dimensions(const CirculantEmbedding& e, std::span<const double> y);
std::vector<double> assign_dimensions(std::span<const std::size_t> order, std::span<const double> y);
std::vector<double> unassign_dimensions(std::span<const std::size_t> order, std::span<const double> y_modes);

}  // namespace mlqmc
