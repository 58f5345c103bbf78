#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "mlqmc/covariance.hpp"

namespace mlqmc {

/// Uniform grid of n^dim points covering [0,1]^dim, boundary included.
/// Point indices run with axis 0 fastest.
struct UniformGrid {
  int dim = 2;
  int points_per_axis = 2;

  UniformGrid() = default;
  UniformGrid(int d, int n);

  double spacing() const { return 1.0 / (points_per_axis - 1); }
  std::size_t size() const;
  std::vector<double> point(std::size_t index) const;
  std::vector<int> multi_index(std::size_t index) const;

  /// True if every point of `coarse` is also a point of this grid.
  bool contains(const UniformGrid& coarse) const;

  bool operator==(const UniformGrid&) const = default;
};

struct EmbeddingOptions {
  double clamp_tolerance = 1e-13;  // relative to the largest eigenvalue
  int max_doublings = 12;
};

/// One real coordinate of the orthogonal eigenbasis of the circulant matrix.
/// Self-conjugate frequencies give one cosine direction, every conjugate pair
/// gives a cosine and a sine direction.
struct CirculantMode {
  enum class Kind : unsigned char { Real, Cos, Sin };
  std::size_t frequency = 0;  // flat index into the extended grid
  Kind kind = Kind::Real;
};

struct FftPlans;

/// Circulant embedding of the covariance matrix of a uniform grid. Immutable
/// after construction; sampling from several threads is safe.
struct CirculantEmbedding {
  UniformGrid grid;
  std::vector<int> ext_per_axis;
  std::size_t s = 0;
  std::vector<double> eigenvalues;               // per mode, natural order
  std::vector<CirculantMode> modes;              // natural order
  std::vector<std::size_t> importance_order;     // y[j] drives modes[importance_order[j]]
  int doublings = 0;
  bool clamped = false;                          // some eigenvalue was clamped to zero
  double min_eigenvalue = 0.0;                   // before clamping
  std::shared_ptr<const FftPlans> plans;

  int ext() const { return ext_per_axis.front(); }
  std::size_t ext_index(std::size_t grid_index) const;
};

CirculantEmbedding build_embedding(const CovarianceKernel& kernel, const UniformGrid& grid,
                                   const EmbeddingOptions& options = {});

/// Row `i` of B, columns in importance order, so that B * y == sample_field(y) - zbar.
std::vector<double> factor_row(const CirculantEmbedding& e, std::size_t i);

/// Lognormal field on a uniform grid with multilinear evaluation in between.
struct FieldRealization {
  int level = 0;
  UniformGrid grid;
  std::vector<double> log_values;
  std::vector<double> values;
};

FieldRealization constant_field(const UniformGrid& grid, double value, int level = 0);

/// Exact sample exp(B y + zbar) at the grid nodes. `y` is in importance order.
FieldRealization sample_field(const CirculantEmbedding& e, const MeanField& zbar, std::span<const double> y,
                              int level = 0);

/// Same as sample_field with `y` indexed by mode (natural order).
FieldRealization sample_field_modes(const CirculantEmbedding& e, const MeanField& zbar,
                                    std::span<const double> y_modes, int level = 0);

double eval_field(const FieldRealization& f, std::span<const double> x);

/// Coarse-grid field with the fine nodal values at shared nodes.
FieldRealization restrict_to_coarse(const FieldRealization& f, const UniformGrid& coarse);

}  // namespace mlqmc
