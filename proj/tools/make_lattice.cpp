// Component-by-component construction of an embedded rank-1 lattice rule.
//
// Builds a generating vector for the power-of-two point counts 2^m_min..2^m_max
// in the shift-averaged Korobov space with smoothness 2 and product weights
// gamma_j = j^-2. Each component minimises the worst ratio, over the embedded
// point counts, between its squared worst-case error and the best error
// attainable for that point count. Output is the two-column "index value"
// format read by load_generating_vector.
//
//   make_lattice --dims 256 --m-min 3 --m-max 14 > data/lattice-cbc-8-16384.256.txt

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <vector>

#include "CLI11.hpp"

int main(int argc, char** argv) {
  int dims = 256, m_min = 3, m_max = 14;
  CLI::App app("embedded rank-1 lattice by CBC");
  app.add_option("--dims", dims)->check(CLI::PositiveNumber);
  app.add_option("--m-min", m_min)->check(CLI::Range(1, 30));
  app.add_option("--m-max", m_max)->check(CLI::Range(1, 30));
  CLI11_PARSE(app, argc, argv);
  if (m_min > m_max) {
    std::fprintf(stderr, "--m-min exceeds --m-max\n");
    return 2;
  }

  const std::uint64_t n_max = std::uint64_t{1} << m_max, mask = n_max - 1;
  const int levels = m_max - m_min + 1;
  std::vector<double> omega(n_max);
  for (std::uint64_t k = 0; k < n_max; ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(n_max);
    omega[k] = 2.0 * std::numbers::pi * std::numbers::pi * (x * x - x + 1.0 / 6.0);
  }
  // point k of the full rule belongs to the 2^m rule iff 2^(m_max-m) divides k
  std::vector<int> first_level(n_max);
  for (std::uint64_t k = 0; k < n_max; ++k) {
    const int tz = k == 0 ? m_max : std::min(std::countr_zero(k), m_max);
    first_level[k] = std::max(0, m_max - tz - m_min);
  }
  std::vector<std::uint64_t> candidates;
  for (std::uint64_t z = 1; z < n_max / 2; z += 2) candidates.push_back(z);

  std::vector<double> prod(n_max, 1.0), err(candidates.size() * levels), bucket(levels);
  std::printf("# embedded rank-1 lattice, CBC, product weights j^-2, smoothness 2\n");
  std::printf("# valid for N in [%llu, %llu]\n", 1ull << m_min, static_cast<unsigned long long>(n_max));
  for (int j = 1; j <= dims; ++j) {
    const double gamma = 1.0 / (static_cast<double>(j) * j);
    std::uint64_t best = 1;  // every odd z is equivalent in one dimension
    if (j > 1) {
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        std::fill(bucket.begin(), bucket.end(), 0.0);
        const std::uint64_t z = candidates[c];
        for (std::uint64_t k = 0; k < n_max; ++k) {
          bucket[first_level[k]] += prod[k] * (1.0 + gamma * omega[(k * z) & mask]);
        }
        double acc = 0.0;
        for (int t = 0; t < levels; ++t) {
          acc += bucket[t];
          err[c * levels + t] = acc / static_cast<double>(std::uint64_t{1} << (m_min + t)) - 1.0;
        }
      }
      std::vector<double> floor(levels, std::numeric_limits<double>::infinity());
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        for (int t = 0; t < levels; ++t) floor[t] = std::min(floor[t], err[c * levels + t]);
      }
      double best_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        double worst = 0.0;
        for (int t = 0; t < levels; ++t) worst = std::max(worst, err[c * levels + t] / floor[t]);
        if (worst < best_ratio) {
          best_ratio = worst;
          best = candidates[c];
        }
      }
    }
    for (std::uint64_t k = 0; k < n_max; ++k) prod[k] *= 1.0 + gamma * omega[(k * best) & mask];
    std::printf("%d %llu\n", j - 1, static_cast<unsigned long long>(best));
    std::fflush(stdout);
    if (j % 64 == 0) std::fprintf(stderr, "dim %d\n", j);
  }
}
