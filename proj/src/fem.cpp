#include "mlqmc/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>

#include "mlqmc/errors.hpp"

namespace mlqmc {

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) sum += vals[p] * x[cols[p]];
    y[i] = sum;
  }
}

std::size_t CsrMatrix::slot(std::size_t i, std::size_t j) const {
  const auto begin = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto end = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(it - cols.begin());
}

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  const std::size_t p = slot(i, j);
  return p == static_cast<std::size_t>(-1) ? 0.0 : vals[p];
}

namespace {

struct ElementGeometry {
  double area;
  std::array<std::array<double, 2>, 3> grad;  // barycentric gradients
};

ElementGeometry geometry(const FeLevel& lev, const std::array<std::size_t, 3>& tri) {
  const auto p0 = lev.node(tri[0]);
  const auto p1 = lev.node(tri[1]);
  const auto p2 = lev.node(tri[2]);
  const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
  ElementGeometry g;
  g.area = 0.5 * std::abs(det);
  const std::array<std::array<double, 2>, 3> p = {p0, p1, p2};
  for (int i = 0; i < 3; ++i) {
    const auto& pj = p[static_cast<std::size_t>((i + 1) % 3)];
    const auto& pk = p[static_cast<std::size_t>((i + 2) % 3)];
    g.grad[static_cast<std::size_t>(i)] = {(pj[1] - pk[1]) / det, (pk[0] - pj[0]) / det};
  }
  return g;
}

}  // namespace

std::array<double, 2> FeLevel::node(std::size_t i) const {
  const std::size_t n = static_cast<std::size_t>(nodes_per_axis);
  return {static_cast<double>(i % n) * h, static_cast<double>(i / n) * h};
}

std::size_t FeLevel::interior_dof() const {
  const std::size_t n = static_cast<std::size_t>(nodes_per_axis) - 2;
  return n * n;
}

FeLevel FeLevel::make(int level) {
  if (level < 0 || level > 10) throw DomainError("FeLevel: level out of range");
  FeLevel lev;
  lev.level = level;
  lev.nodes_per_axis = nodes_for_level(level);
  const std::size_t n = static_cast<std::size_t>(lev.nodes_per_axis);
  lev.h = 1.0 / static_cast<double>(n - 1);
  lev.dof = n * n;

  lev.boundary.assign(lev.dof, 0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 || j == 0 || i == n - 1 || j == n - 1) lev.boundary[i + n * j] = 1;
    }
  }

  for (std::size_t j = 0; j + 1 < n; ++j) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t v00 = i + n * j;
      const std::size_t v10 = v00 + 1;
      const std::size_t v01 = v00 + n;
      const std::size_t v11 = v01 + 1;
      lev.triangles.push_back({v00, v10, v11});
      lev.triangles.push_back({v00, v11, v01});
      const double x0 = static_cast<double>(i) * lev.h;
      const double y0 = static_cast<double>(j) * lev.h;
      lev.centroids.push_back({x0 + 2.0 * lev.h / 3.0, y0 + lev.h / 3.0});
      lev.centroids.push_back({x0 + lev.h / 3.0, y0 + 2.0 * lev.h / 3.0});
    }
  }

  // Sparsity: each node couples to itself, its E/W/N/S neighbours and the two
  // neighbours along the cell diagonal.
  CsrMatrix& pat = lev.pattern;
  pat.rows = lev.dof;
  pat.row_ptr.assign(lev.dof + 1, 0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> nb;
      const auto add = [&](long di, long dj) {
        const long ii = static_cast<long>(i) + di;
        const long jj = static_cast<long>(j) + dj;
        if (ii >= 0 && jj >= 0 && ii < static_cast<long>(n) && jj < static_cast<long>(n)) {
          nb.push_back(static_cast<std::size_t>(ii) + n * static_cast<std::size_t>(jj));
        }
      };
      add(-1, -1);
      add(0, -1);
      add(-1, 0);
      add(0, 0);
      add(1, 0);
      add(0, 1);
      add(1, 1);
      std::sort(nb.begin(), nb.end());
      pat.cols.insert(pat.cols.end(), nb.begin(), nb.end());
      pat.row_ptr[i + n * j + 1] = pat.cols.size();
    }
  }
  pat.vals.assign(pat.cols.size(), 0.0);

  lev.element_slots.reserve(lev.triangles.size());
  for (const auto& tri : lev.triangles) {
    std::array<std::size_t, 9> slots{};
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) slots[3 * a + b] = pat.slot(tri[a], tri[b]);
    }
    lev.element_slots.push_back(slots);
  }

  lev.mass = pat;
  for (std::size_t t = 0; t < lev.triangles.size(); ++t) {
    const double area = geometry(lev, lev.triangles[t]).area;
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        lev.mass.vals[lev.element_slots[t][3 * a + b]] += area / 12.0 * (a == b ? 2.0 : 1.0);
      }
    }
  }
  return lev;
}

TargetAndControl TargetAndControl::reference(double alpha) {
  TargetAndControl tc;
  // The jump sits exactly on mesh lines, so midpoints on the square's edges
  // take the average of the two sides; otherwise the closed-set convention
  // adds a one-sided O(h) strip to the load.
  tc.g = [](double x, double y) {
    const auto side = [](double t) { return (t > 0.25 && t < 0.75) ? 1.0 : (t == 0.25 || t == 0.75) ? 0.5 : 0.0; };
    return side(x) * side(y);
  };
  tc.z = [](double x, double y) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return 5.0 * (1.0 - std::cos(two_pi * x)) * (1.0 - std::cos(two_pi * y));
  };
  tc.alpha = alpha;
  return tc;
}

TargetAndControl TargetAndControl::zero(double alpha) {
  TargetAndControl tc;
  tc.g = [](double, double) { return 0.0; };
  tc.z = [](double, double) { return 0.0; };
  tc.alpha = alpha;
  return tc;
}

CsrMatrix assemble_stiffness(const FeLevel& lev, std::span<const double> element_coefficients) {
  if (element_coefficients.size() != lev.triangles.size()) {
    throw DimensionMismatch("assemble_stiffness: one coefficient per triangle expected");
  }
  CsrMatrix k = lev.pattern;
  for (std::size_t t = 0; t < lev.triangles.size(); ++t) {
    const auto g = geometry(lev, lev.triangles[t]);
    const double scale = element_coefficients[t] * g.area;
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        const double dot = g.grad[a][0] * g.grad[b][0] + g.grad[a][1] * g.grad[b][1];
        k.vals[lev.element_slots[t][3 * a + b]] += scale * dot;
      }
    }
  }
  return k;
}

std::vector<double> centroid_coefficients(const FeLevel& lev, const FieldRealization& a) {
  std::vector<double> coef(lev.centroids.size());
  for (std::size_t t = 0; t < coef.size(); ++t) coef[t] = eval_field(a, lev.centroids[t]);
  return coef;
}

CsrMatrix assemble_stiffness(const FeLevel& lev, const FieldRealization& a) {
  return assemble_stiffness(lev, centroid_coefficients(lev, a));
}

void apply_dirichlet(const FeLevel& lev, CsrMatrix& a) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
      const std::size_t j = a.cols[p];
      if (lev.boundary[i] || lev.boundary[j]) a.vals[p] = (i == j) ? 1.0 : 0.0;
    }
  }
}

namespace {

// Edge-midpoint rule: int_T f phi_i ~ |T|/3 * (f(m_ij) + f(m_ik)) / 2.
template <typename MidpointValue>
std::vector<double> midpoint_load(const FeLevel& lev, MidpointValue value, BoundaryRows rows) {
  std::vector<double> b(lev.dof, 0.0);
  for (const auto& tri : lev.triangles) {
    const double area = 0.5 * lev.h * lev.h;
    double fm[3];  // fm[e]: midpoint of edge (tri[e], tri[e+1])
    for (std::size_t e = 0; e < 3; ++e) fm[e] = value(tri[e], tri[(e + 1) % 3]);
    for (std::size_t v = 0; v < 3; ++v) {
      b[tri[v]] += area / 3.0 * 0.5 * (fm[v] + fm[(v + 2) % 3]);
    }
  }
  if (rows == BoundaryRows::Zero) {
    for (std::size_t i = 0; i < lev.dof; ++i) {
      if (lev.boundary[i]) b[i] = 0.0;
    }
  }
  return b;
}

}  // namespace

std::vector<double> assemble_load(const FeLevel& lev, const ScalarFunction& f, BoundaryRows rows) {
  return midpoint_load(
      lev,
      [&](std::size_t i, std::size_t j) {
        const auto pi = lev.node(i);
        const auto pj = lev.node(j);
        return f(0.5 * (pi[0] + pj[0]), 0.5 * (pi[1] + pj[1]));
      },
      rows);
}

std::vector<double> assemble_adjoint_load(const FeLevel& lev, const FeFunction& u, const ScalarFunction& g,
                                          BoundaryRows rows) {
  if (u.nodal_values.size() != lev.dof) throw DimensionMismatch("assemble_adjoint_load: state on wrong level");
  return midpoint_load(
      lev,
      [&](std::size_t i, std::size_t j) {
        const auto pi = lev.node(i);
        const auto pj = lev.node(j);
        const double um = 0.5 * (u.nodal_values[i] + u.nodal_values[j]);
        return um - g(0.5 * (pi[0] + pj[0]), 0.5 * (pi[1] + pj[1]));
      },
      rows);
}

FeFunction interpolate(const FeLevel& lev, const ScalarFunction& f) {
  FeFunction out{lev.level, std::vector<double>(lev.dof)};
  for (std::size_t i = 0; i < lev.dof; ++i) {
    const auto p = lev.node(i);
    out.nodal_values[i] = f(p[0], p[1]);
  }
  return out;
}

double eval_fe(const FeLevel& lev, const FeFunction& f, double x, double y) {
  if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) throw DomainError("eval_fe: point outside the unit square");
  const int n = lev.nodes_per_axis;
  const double inv_h = static_cast<double>(n - 1);
  const int ci = std::min(static_cast<int>(std::floor(x * inv_h)), n - 2);
  const int cj = std::min(static_cast<int>(std::floor(y * inv_h)), n - 2);
  const double s = x * inv_h - ci;
  const double t = y * inv_h - cj;
  const std::size_t nn = static_cast<std::size_t>(n);
  const std::size_t v00 = static_cast<std::size_t>(ci) + nn * static_cast<std::size_t>(cj);
  const auto& v = f.nodal_values;
  const double u00 = v[v00];
  const double u10 = v[v00 + 1];
  const double u01 = v[v00 + nn];
  const double u11 = v[v00 + nn + 1];
  if (t <= s) return u00 + s * (u10 - u00) + t * (u11 - u10);
  return u00 + t * (u01 - u00) + s * (u11 - u01);
}

double l2_inner(const FeLevel& lev, const FeFunction& a, const FeFunction& b) {
  if (a.nodal_values.size() != lev.dof || b.nodal_values.size() != lev.dof) {
    throw DimensionMismatch("l2_inner: function on wrong level");
  }
  std::vector<double> mb(lev.dof);
  lev.mass.multiply(b.nodal_values, mb);
  return std::inner_product(a.nodal_values.begin(), a.nodal_values.end(), mb.begin(), 0.0);
}

double l2_norm(const FeLevel& lev, const FeFunction& f) { return std::sqrt(std::max(0.0, l2_inner(lev, f, f))); }

namespace {

// Fine node (i, j) of a 2x refinement: even/even nodes are injected, the rest
// average the two coarse endpoints of the coarse edge they bisect.
template <typename Visit>
void for_each_parent(std::size_t nf, Visit visit) {
  const std::size_t nc = (nf - 1) / 2 + 1;
  for (std::size_t j = 0; j < nf; ++j) {
    for (std::size_t i = 0; i < nf; ++i) {
      const std::size_t fine = i + nf * j;
      const std::size_t ci = i / 2;
      const std::size_t cj = j / 2;
      const bool odd_i = i % 2;
      const bool odd_j = j % 2;
      const std::size_t c = ci + nc * cj;
      if (!odd_i && !odd_j) {
        visit(fine, c, 1.0);
      } else if (odd_i && !odd_j) {
        visit(fine, c, 0.5);
        visit(fine, c + 1, 0.5);
      } else if (!odd_i && odd_j) {
        visit(fine, c, 0.5);
        visit(fine, c + nc, 0.5);
      } else {
        visit(fine, c, 0.5);
        visit(fine, c + nc + 1, 0.5);
      }
    }
  }
}

}  // namespace

FeFunction prolong(const FeFunction& f, const FeLevel& to) {
  const std::size_t nf = static_cast<std::size_t>(to.nodes_per_axis);
  const std::size_t nc = (nf - 1) / 2 + 1;
  if ((nf - 1) % 2 != 0 || f.nodal_values.size() != nc * nc) {
    throw NestingViolation("prolong: source is not the next coarser level of the target");
  }
  FeFunction out{to.level, std::vector<double>(to.dof, 0.0)};
  for_each_parent(nf, [&](std::size_t fine, std::size_t coarse, double w) {
    out.nodal_values[fine] += w * f.nodal_values[coarse];
  });
  return out;
}

FeHierarchy::FeHierarchy(int max_level, SolverOptions options) : options_(options) {
  if (max_level < 0) throw DomainError("FeHierarchy: negative level");
  for (int l = 0; l <= max_level; ++l) levels_.push_back(FeLevel::make(l));
}

FeFunction FeHierarchy::prolong_to(const FeFunction& f, int target_level) const {
  if (target_level < f.level) throw NestingViolation("prolong_to: target coarser than source");
  FeFunction out = f;
  while (out.level < target_level) out = prolong(out, level(out.level + 1));
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Dense Cholesky factor of the interior block of a Dirichlet-reduced matrix.
struct DenseCholesky {
  std::vector<std::size_t> interior;
  std::vector<double> l;  // row-major lower factor

  DenseCholesky(const FeLevel& lev, const CsrMatrix& a) {
    for (std::size_t i = 0; i < lev.dof; ++i) {
      if (!lev.boundary[i]) interior.push_back(i);
    }
    const std::size_t n = interior.size();
    l.assign(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) l[r * n + c] = a.at(interior[r], interior[c]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      double d = l[j * n + j];
      for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
      if (!(d > 0.0)) throw SolverDiverged("coarse Cholesky: matrix not positive definite");
      d = std::sqrt(d);
      l[j * n + j] = d;
      for (std::size_t i = j + 1; i < n; ++i) {
        double v = l[i * n + j];
        for (std::size_t k = 0; k < j; ++k) v -= l[i * n + k] * l[j * n + k];
        l[i * n + j] = v / d;
      }
    }
  }

  void solve(std::span<const double> rhs, std::span<double> x) const {
    const std::size_t n = interior.size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      double v = rhs[interior[i]];
      for (std::size_t k = 0; k < i; ++k) v -= l[i * n + k] * w[k];
      w[i] = v / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double v = w[ii];
      for (std::size_t k = ii + 1; k < n; ++k) v -= l[k * n + ii] * w[k];
      w[ii] = v / l[ii * n + ii];
    }
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) x[interior[i]] = w[i];
  }
};

void gauss_seidel(const CsrMatrix& a, std::span<const double> b, std::span<double> x, bool forward) {
  const std::size_t n = a.rows;
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = forward ? step : n - 1 - step;
    double sum = b[i];
    double diag = 1.0;
    for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
      const std::size_t j = a.cols[p];
      if (j == i) {
        diag = a.vals[p];
      } else {
        sum -= a.vals[p] * x[j];
      }
    }
    x[i] = sum / diag;
  }
}

// Symmetric V-cycle over rediscretised operators on FE levels 0..top.
class Multigrid {
 public:
  Multigrid(const FeHierarchy& hier, int top, const FieldRealization& a, int smoothing)
      : hier_(hier), smoothing_(smoothing) {
    ops_.reserve(static_cast<std::size_t>(top) + 1);
    for (int l = 0; l <= top; ++l) {
      const FeLevel& lev = hier.level(l);
      CsrMatrix k = assemble_stiffness(lev, a);
      apply_dirichlet(lev, k);
      ops_.push_back(std::move(k));
    }
    coarse_.emplace(hier.level(0), ops_.front());
  }

  const CsrMatrix& op(int l) const { return ops_[static_cast<std::size_t>(l)]; }

  void apply(int l, std::span<const double> r, std::span<double> e) const {
    if (l == 0) {
      coarse_->solve(r, e);
      return;
    }
    const CsrMatrix& a = op(l);
    const FeLevel& fine = hier_.level(l);
    const FeLevel& coarse = hier_.level(l - 1);
    std::fill(e.begin(), e.end(), 0.0);
    for (int k = 0; k < smoothing_; ++k) gauss_seidel(a, r, e, true);

    std::vector<double> res(fine.dof);
    a.multiply(e, res);
    for (std::size_t i = 0; i < fine.dof; ++i) res[i] = r[i] - res[i];

    std::vector<double> rc(coarse.dof, 0.0);
    for_each_parent(static_cast<std::size_t>(fine.nodes_per_axis),
                    [&](std::size_t f, std::size_t c, double w) { rc[c] += w * res[f]; });
    for (std::size_t i = 0; i < coarse.dof; ++i) {
      if (coarse.boundary[i]) rc[i] = 0.0;
    }
    std::vector<double> ec(coarse.dof);
    apply(l - 1, rc, ec);
    for_each_parent(static_cast<std::size_t>(fine.nodes_per_axis),
                    [&](std::size_t f, std::size_t c, double w) { e[f] += w * ec[c]; });

    for (int k = 0; k < smoothing_; ++k) gauss_seidel(a, r, e, false);
  }

 private:
  const FeHierarchy& hier_;
  int smoothing_;
  std::vector<CsrMatrix> ops_;
  std::optional<DenseCholesky> coarse_;
};

template <typename Precondition>
SolveStats pcg(const CsrMatrix& a, std::span<const double> b, std::span<double> x, double tol, int cap,
               Precondition precondition) {
  const std::size_t n = a.rows;
  std::fill(x.begin(), x.end(), 0.0);
  SolveStats stats;
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) return stats;

  std::vector<double> r(b.begin(), b.end());
  std::vector<double> z(n), p(n), ap(n);
  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= cap; ++it) {
    a.multiply(p, ap);
    const double alpha = rz / dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    stats.iterations = it;
    stats.relative_residual = std::sqrt(dot(r, r)) / bnorm;
    if (stats.relative_residual <= tol) {
      // The recursive residual drifts on rough coefficients; accept only if
      // the true one agrees, otherwise restart from it.
      a.multiply(x, ap);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
      stats.relative_residual = std::sqrt(dot(r, r)) / bnorm;
      if (stats.relative_residual <= tol) break;
      precondition(r, z);
      p = z;
      rz = dot(r, z);
      continue;
    }
    precondition(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  if (stats.relative_residual > tol) {
    a.multiply(x, ap);
    double rr = 0.0;
    for (std::size_t i = 0; i < n; ++i) rr += (b[i] - ap[i]) * (b[i] - ap[i]);
    stats.relative_residual = std::sqrt(rr) / bnorm;
  }
  return stats;
}

}  // namespace

struct PreparedOperator::Impl {
  const FeHierarchy* hier = nullptr;
  int level = 0;
  CsrMatrix jacobi_matrix;  // used below the multigrid levels
  std::vector<double> inv_diag;
  std::optional<Multigrid> mg;
};

PreparedOperator FeHierarchy::prepare(int l, const FieldRealization& a) const {
  auto impl = std::make_shared<PreparedOperator::Impl>();
  impl->hier = this;
  impl->level = l;
  const FeLevel& lev = level(l);
  if (l < options_.direct_cg_levels) {
    impl->jacobi_matrix = assemble_stiffness(lev, a);
    apply_dirichlet(lev, impl->jacobi_matrix);
    impl->inv_diag.resize(lev.dof);
    for (std::size_t i = 0; i < lev.dof; ++i) impl->inv_diag[i] = 1.0 / impl->jacobi_matrix.at(i, i);
  } else {
    impl->mg.emplace(*this, l, a, options_.smoothing_steps);
  }
  PreparedOperator op;
  op.impl_ = std::move(impl);
  return op;
}

const CsrMatrix& PreparedOperator::matrix() const {
  return impl_->mg ? impl_->mg->op(impl_->level) : impl_->jacobi_matrix;
}

FeFunction PreparedOperator::solve(std::span<const double> rhs, SolveStats* stats) const {
  const FeHierarchy& hier = *impl_->hier;
  const int l = impl_->level;
  const FeLevel& lev = hier.level(l);
  const SolverOptions& options = hier.options();
  if (rhs.size() != lev.dof) throw DimensionMismatch("solve: right-hand side on wrong level");
  FeFunction out{l, std::vector<double>(lev.dof, 0.0)};
  const int cap = static_cast<int>(std::ceil(options.cap_factor * std::sqrt(static_cast<double>(lev.dof))));

  SolveStats st;
  if (impl_->mg) {
    const Multigrid& mg = *impl_->mg;
    st = pcg(mg.op(l), rhs, out.nodal_values, options.rel_tolerance, cap,
             [&](std::span<const double> r, std::span<double> z) { mg.apply(l, r, z); });
  } else {
    const auto& inv_diag = impl_->inv_diag;
    st = pcg(impl_->jacobi_matrix, rhs, out.nodal_values, options.rel_tolerance, cap,
             [&](std::span<const double> r, std::span<double> z) {
               for (std::size_t i = 0; i < r.size(); ++i) z[i] = inv_diag[i] * r[i];
             });
  }
  if (stats) *stats = st;
  if (st.relative_residual > options.rel_tolerance) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "PCG on level %d stopped at relative residual %.3e after %d iterations", l,
                  st.relative_residual, st.iterations);
    throw SolverDiverged(buf);
  }
  return out;
}

FeFunction FeHierarchy::solve(int l, const FieldRealization& a, std::span<const double> rhs, SolveStats* stats) const {
  if (rhs.size() != level(l).dof) throw DimensionMismatch("solve: right-hand side on wrong level");
  return prepare(l, a).solve(rhs, stats);
}

FeFunction solve_state(const FeHierarchy& hier, int level, const FieldRealization& a, const ScalarFunction& z,
                       SolveStats* stats) {
  const auto b = assemble_load(hier.level(level), z);
  return hier.solve(level, a, b, stats);
}

FeFunction solve_adjoint(const FeHierarchy& hier, int level, const FieldRealization& a, const FeFunction& u,
                         const ScalarFunction& g, SolveStats* stats) {
  const auto b = assemble_adjoint_load(hier.level(level), u, g);
  return hier.solve(level, a, b, stats);
}

}  // namespace mlqmc
