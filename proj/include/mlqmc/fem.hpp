#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mlqmc/circulant_field.hpp"

namespace mlqmc {

using ScalarFunction = std::function<double(double, double)>;

/// Compressed sparse row matrix; used for the P1 stiffness and mass operators.
struct CsrMatrix {
  std::size_t rows = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> cols;
  std::vector<double> vals;

  void multiply(std::span<const double> x, std::span<double> y) const;
  double at(std::size_t i, std::size_t j) const;
  std::size_t slot(std::size_t i, std::size_t j) const;
};

/// Uniform triangulation of (0,1)^2 with (2^(2+level)+1)^2 nodes. Each cell is
/// split along its lower-left to upper-right diagonal. Nodes run x-fastest.
struct FeLevel {
  int level = 0;
  int nodes_per_axis = 5;
  double h = 0.25;
  std::size_t dof = 25;  // all nodes, boundary included
  std::vector<unsigned char> boundary;
  std::vector<std::array<std::size_t, 3>> triangles;
  std::vector<std::array<double, 2>> centroids;
  std::vector<std::array<std::size_t, 9>> element_slots;  // CSR positions of the 3x3 element block
  CsrMatrix pattern;
  CsrMatrix mass;

  static FeLevel make(int level);
  static int nodes_for_level(int level) { return (1 << (2 + level)) + 1; }

  std::array<double, 2> node(std::size_t i) const;
  std::size_t interior_dof() const;
};

struct FeFunction {
  int level = 0;
  std::vector<double> nodal_values;
};

/// Target g, control z and Tikhonov weight alpha of the tracking objective.
struct TargetAndControl {
  ScalarFunction g;
  ScalarFunction z;
  double alpha = 1.0;

  /// g = indicator of [0.25,0.75]^2, z = 5(1-cos 2 pi x1)(1-cos 2 pi x2).
  static TargetAndControl reference(double alpha = 1.0);
  static TargetAndControl zero(double alpha = 1.0);
};

/// Stiffness matrix with one coefficient value per triangle, no boundary
/// conditions applied.
CsrMatrix assemble_stiffness(const FeLevel& lev, std::span<const double> element_coefficients);
/// Coefficient evaluated at each triangle centroid.
CsrMatrix assemble_stiffness(const FeLevel& lev, const FieldRealization& a);
std::vector<double> centroid_coefficients(const FeLevel& lev, const FieldRealization& a);

/// Replaces boundary rows and columns by the identity.
void apply_dirichlet(const FeLevel& lev, CsrMatrix& a);

enum class BoundaryRows { Zero, Keep };

/// Load vector of f with the edge-midpoint rule on every triangle.
std::vector<double> assemble_load(const FeLevel& lev, const ScalarFunction& f,
                                  BoundaryRows rows = BoundaryRows::Zero);
/// Load vector of (u - g) with u a P1 function on `lev`.
std::vector<double> assemble_adjoint_load(const FeLevel& lev, const FeFunction& u, const ScalarFunction& g,
                                          BoundaryRows rows = BoundaryRows::Zero);

FeFunction interpolate(const FeLevel& lev, const ScalarFunction& f);
double eval_fe(const FeLevel& lev, const FeFunction& f, double x, double y);
double l2_norm(const FeLevel& lev, const FeFunction& f);
double l2_inner(const FeLevel& lev, const FeFunction& a, const FeFunction& b);

/// Exact embedding of a P1 function into the next finer level.
FeFunction prolong(const FeFunction& f, const FeLevel& to);

struct SolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

struct SolverOptions {
  double rel_tolerance = 1e-10;
  double cap_factor = 10.0;  // iteration cap = cap_factor * sqrt(dof)
  int direct_cg_levels = 2;  // levels below this use Jacobi-preconditioned CG
  int smoothing_steps = 1;
};

class FeHierarchy;

/// Stiffness matrix and preconditioner for one coefficient field, reusable
/// for several right-hand sides (state and adjoint share one).
class PreparedOperator {
 public:
  /// `rhs` must already have zero boundary rows.
  FeFunction solve(std::span<const double> rhs, SolveStats* stats = nullptr) const;
  const CsrMatrix& matrix() const;

 private:
  friend class FeHierarchy;
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Nested FE levels 0..max_level, shared read-only by all solves.
class FeHierarchy {
 public:
  explicit FeHierarchy(int max_level, SolverOptions options = {});

  int max_level() const { return static_cast<int>(levels_.size()) - 1; }
  const FeLevel& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  const SolverOptions& options() const { return options_; }

  FeFunction prolong_to(const FeFunction& f, int target_level) const;

  /// Solves the Dirichlet problem -div(a grad w) = b at `level`. `rhs` must
  /// already have zero boundary rows.
  FeFunction solve(int level, const FieldRealization& a, std::span<const double> rhs, SolveStats* stats = nullptr) const;
  PreparedOperator prepare(int level, const FieldRealization& a) const;

 private:
  std::vector<FeLevel> levels_;
  SolverOptions options_;
};

FeFunction solve_state(const FeHierarchy& hier, int level, const FieldRealization& a, const ScalarFunction& z,
                       SolveStats* stats = nullptr);
FeFunction solve_adjoint(const FeHierarchy& hier, int level, const FieldRealization& a, const FeFunction& u,
                         const ScalarFunction& g, SolveStats* stats = nullptr);

}  // namespace mlqmc
