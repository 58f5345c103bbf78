#include "mlqmc/circulant_field.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>

#include "mlqmc/errors.hpp"

namespace mlqmc {

namespace {

// FFTW planning is not thread-safe; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDoubles {
  explicit FftwDoubles(std::size_t n) : ptr(fftw_alloc_real(n)), size(n) {}
  ~FftwDoubles() { fftw_free(ptr); }
  FftwDoubles(const FftwDoubles&) = delete;
  FftwDoubles& operator=(const FftwDoubles&) = delete;
  double* ptr;
  std::size_t size;
};

struct FftwComplex {
  explicit FftwComplex(std::size_t n) : ptr(fftw_alloc_complex(n)), size(n) {
    std::fill_n(reinterpret_cast<double*>(ptr), 2 * n, 0.0);
  }
  ~FftwComplex() { fftw_free(ptr); }
  FftwComplex(const FftwComplex&) = delete;
  FftwComplex& operator=(const FftwComplex&) = delete;
  fftw_complex* ptr;
  std::size_t size;
};

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

struct FftPlans {
  int dim = 0;
  int ext = 0;
  std::size_t real_size = 0;
  std::size_t half_size = 0;
  fftw_plan c2r = nullptr;

  FftPlans(int d, int m) : dim(d), ext(m) {
    real_size = ipow(static_cast<std::size_t>(m), d);
    half_size = real_size / static_cast<std::size_t>(m) * static_cast<std::size_t>(m / 2 + 1);
    std::vector<int> n(static_cast<std::size_t>(d), m);
    FftwComplex in(half_size);
    FftwDoubles out(real_size);
    std::lock_guard lock(planner_mutex());
    c2r = fftw_plan_dft_c2r(d, n.data(), in.ptr, out.ptr, FFTW_ESTIMATE);
  }
  ~FftPlans() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(c2r);
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;

  // Position of a full-spectrum frequency in the half-complex layout, where
  // the last FFTW axis (our axis 0) keeps only indices 0..ext/2.
  std::size_t half_index(std::size_t k) const {
    const std::size_t m = static_cast<std::size_t>(ext);
    const std::size_t k0 = k % m;
    return k0 + (m / 2 + 1) * (k / m);
  }
};

UniformGrid::UniformGrid(int d, int n) : dim(d), points_per_axis(n) {
  if (d < 1 || d > 3) throw DomainError("UniformGrid: dimension must be 1, 2 or 3");
  if (n < 2) throw DomainError("UniformGrid: need at least two points per axis");
}

std::size_t UniformGrid::size() const { return ipow(static_cast<std::size_t>(points_per_axis), dim); }

std::vector<int> UniformGrid::multi_index(std::size_t index) const {
  std::vector<int> mi(static_cast<std::size_t>(dim));
  for (int a = 0; a < dim; ++a) {
    mi[static_cast<std::size_t>(a)] = static_cast<int>(index % static_cast<std::size_t>(points_per_axis));
    index /= static_cast<std::size_t>(points_per_axis);
  }
  return mi;
}

std::vector<double> UniformGrid::point(std::size_t index) const {
  const auto mi = multi_index(index);
  std::vector<double> x(mi.size());
  const double h = spacing();
  for (std::size_t a = 0; a < mi.size(); ++a) x[a] = mi[a] * h;
  return x;
}

bool UniformGrid::contains(const UniformGrid& coarse) const {
  return coarse.dim == dim && coarse.points_per_axis <= points_per_axis &&
         (points_per_axis - 1) % (coarse.points_per_axis - 1) == 0;
}

std::size_t CirculantEmbedding::ext_index(std::size_t grid_index) const {
  const auto mi = grid.multi_index(grid_index);
  std::size_t k = 0;
  std::size_t stride = 1;
  for (std::size_t a = 0; a < mi.size(); ++a) {
    k += static_cast<std::size_t>(mi[a]) * stride;
    stride *= static_cast<std::size_t>(ext_per_axis[a]);
  }
  return k;
}

namespace {

std::vector<std::size_t> ext_multi(std::size_t k, int dim, std::size_t m) {
  std::vector<std::size_t> mi(static_cast<std::size_t>(dim));
  for (auto& v : mi) {
    v = k % m;
    k /= m;
  }
  return mi;
}

std::size_t conjugate(std::size_t k, int dim, std::size_t m) {
  std::size_t c = 0;
  std::size_t stride = 1;
  for (int a = 0; a < dim; ++a) {
    const std::size_t ka = k % m;
    k /= m;
    c += ((m - ka) % m) * stride;
    stride *= m;
  }
  return c;
}

// Eigenvalues of the symmetric nested-circulant matrix with first column c,
// indexed by full-spectrum frequency.
std::vector<double> circulant_spectrum(const CovarianceKernel& kernel, const UniformGrid& grid, int m) {
  const int d = grid.dim;
  const std::size_t mm = static_cast<std::size_t>(m);
  const std::size_t total = ipow(mm, d);
  const double h = grid.spacing();

  FftwDoubles column(total);
  for (std::size_t k = 0; k < total; ++k) {
    const auto mi = ext_multi(k, d, mm);
    double r2 = 0.0;
    for (auto ka : mi) {
      const double wrapped = static_cast<double>(std::min(ka, mm - ka)) * h;
      r2 += wrapped * wrapped;
    }
    column.ptr[k] = kernel(std::sqrt(r2));
  }

  const std::size_t half = total / mm * (mm / 2 + 1);
  FftwComplex spectrum(half);
  std::vector<int> n(static_cast<std::size_t>(d), m);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c(d, n.data(), column.ptr, spectrum.ptr, FFTW_ESTIMATE);
  }
  // The planner may clobber arrays only for measuring flags; ESTIMATE keeps them.
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }

  std::vector<double> lambda(total);
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t src = k;
    if (k % mm > mm / 2) src = conjugate(k, d, mm);
    const std::size_t hk = src % mm + (mm / 2 + 1) * (src / mm);
    lambda[k] = spectrum.ptr[hk][0];
  }
  return lambda;
}

}  // namespace

CirculantEmbedding build_embedding(const CovarianceKernel& kernel, const UniformGrid& grid,
                                   const EmbeddingOptions& options) {
  if (!kernel) throw DomainError("build_embedding: empty kernel");
  if (grid.points_per_axis < 2) throw DomainError("build_embedding: grid needs at least two points per axis");

  int m = 2 * (grid.points_per_axis - 1);
  std::vector<double> lambda;
  int doublings = 0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  for (;; ++doublings) {
    lambda = circulant_spectrum(kernel, grid, m);
    const auto [lo, hi] = std::minmax_element(lambda.begin(), lambda.end());
    lambda_min = *lo;
    lambda_max = *hi;
    if (lambda_max <= 0.0) throw PaddingExhausted("build_embedding: circulant spectrum is not positive");
    if (lambda_min >= -options.clamp_tolerance * lambda_max) break;
    if (doublings == options.max_doublings) {
      throw PaddingExhausted("build_embedding: minimum eigenvalue " + std::to_string(lambda_min / lambda_max) +
                             " (relative) after " + std::to_string(doublings) + " doublings of extension " +
                             std::to_string(2 * (grid.points_per_axis - 1)));
    }
    m *= 2;
  }

  CirculantEmbedding e;
  e.grid = grid;
  e.ext_per_axis.assign(static_cast<std::size_t>(grid.dim), m);
  e.s = lambda.size();
  e.doublings = doublings;
  e.min_eigenvalue = lambda_min;
  for (auto& v : lambda) {
    if (v < 0.0) {
      v = 0.0;
      e.clamped = true;
    }
  }

  const std::size_t mm = static_cast<std::size_t>(m);
  e.modes.reserve(e.s);
  e.eigenvalues.reserve(e.s);
  for (std::size_t k = 0; k < e.s; ++k) {
    const std::size_t kc = conjugate(k, grid.dim, mm);
    if (kc == k) {
      e.modes.push_back({k, CirculantMode::Kind::Real});
      e.eigenvalues.push_back(lambda[k]);
    } else if (k < kc) {
      e.modes.push_back({k, CirculantMode::Kind::Cos});
      e.modes.push_back({k, CirculantMode::Kind::Sin});
      e.eigenvalues.push_back(lambda[k]);
      e.eigenvalues.push_back(lambda[k]);
    }
  }

  e.importance_order.resize(e.s);
  std::iota(e.importance_order.begin(), e.importance_order.end(), std::size_t{0});
  std::stable_sort(e.importance_order.begin(), e.importance_order.end(),
                   [&](std::size_t a, std::size_t b) { return e.eigenvalues[a] > e.eigenvalues[b]; });

  e.plans = std::make_shared<const FftPlans>(grid.dim, m);
  return e;
}

std::vector<double> factor_row(const CirculantEmbedding& e, std::size_t i) {
  if (i >= e.grid.size()) throw DomainError("factor_row: grid index out of range");
  const std::size_t m = static_cast<std::size_t>(e.ext());
  const auto xi = e.grid.multi_index(i);
  const double inv_sqrt_s = 1.0 / std::sqrt(static_cast<double>(e.s));

  std::vector<double> row(e.s);
  for (std::size_t j = 0; j < e.s; ++j) {
    const std::size_t mode_index = e.importance_order[j];
    const auto& mode = e.modes[mode_index];
    const auto k = ext_multi(mode.frequency, e.grid.dim, m);
    std::size_t phase = 0;
    for (std::size_t a = 0; a < k.size(); ++a) phase = (phase + k[a] * static_cast<std::size_t>(xi[a])) % m;
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(m);
    const double amp = std::sqrt(e.eigenvalues[mode_index]) * inv_sqrt_s;
    switch (mode.kind) {
      case CirculantMode::Kind::Real:
        row[j] = amp * std::cos(theta);
        break;
      case CirculantMode::Kind::Cos:
        row[j] = amp * std::numbers::sqrt2 * std::cos(theta);
        break;
      case CirculantMode::Kind::Sin:
        row[j] = amp * std::numbers::sqrt2 * std::sin(theta);
        break;
    }
  }
  return row;
}

namespace {

// Fills the half-complex spectrum X so that the c2r transform of X, divided
// by sqrt(s), equals G sqrt(Lambda) y. `coord(n)` returns the coefficient of
// the n-th mode (natural order).
template <typename CoordFn>
FieldRealization sample_impl(const CirculantEmbedding& e, const MeanField& zbar, int level, CoordFn coord) {
  const FftPlans& plans = *e.plans;
  const std::size_t m = static_cast<std::size_t>(e.ext());
  FftwComplex spectrum(plans.half_size);
  FftwDoubles out(plans.real_size);

  auto put = [&](std::size_t k, std::complex<double> v) {
    const std::size_t kc = conjugate(k, e.grid.dim, m);
    const std::size_t k0 = k % m;
    if (k0 <= m / 2) {
      auto* slot = spectrum.ptr[plans.half_index(k)];
      slot[0] = v.real();
      slot[1] = v.imag();
    }
    if (kc != k && kc % m <= m / 2) {
      auto* slot = spectrum.ptr[plans.half_index(kc)];
      slot[0] = v.real();
      slot[1] = -v.imag();
    }
  };

  for (std::size_t n = 0; n < e.s; ++n) {
    const auto& mode = e.modes[n];
    const double lambda = e.eigenvalues[n];
    switch (mode.kind) {
      case CirculantMode::Kind::Real:
        put(mode.frequency, {std::sqrt(lambda) * coord(n), 0.0});
        break;
      case CirculantMode::Kind::Cos: {
        // The sine partner always directly follows its cosine mode.
        const double a = std::sqrt(0.5 * lambda);
        put(mode.frequency, {a * coord(n), -a * coord(n + 1)});
        ++n;
        break;
      }
      case CirculantMode::Kind::Sin:
        break;
    }
  }

  fftw_execute_dft_c2r(plans.c2r, spectrum.ptr, out.ptr);

  FieldRealization f;
  f.level = level;
  f.grid = e.grid;
  const std::size_t npts = e.grid.size();
  f.log_values.resize(npts);
  f.values.resize(npts);
  const double inv_sqrt_s = 1.0 / std::sqrt(static_cast<double>(e.s));
  for (std::size_t i = 0; i < npts; ++i) {
    const auto x = e.grid.point(i);
    f.log_values[i] = out.ptr[e.ext_index(i)] * inv_sqrt_s + zbar(x);
    f.values[i] = std::exp(f.log_values[i]);
  }
  return f;
}

}  // namespace

FieldRealization sample_field(const CirculantEmbedding& e, const MeanField& zbar, std::span<const double> y,
                              int level) {
  if (y.size() != e.s) {
    throw DimensionMismatch("sample_field: expected " + std::to_string(e.s) + " normals, got " +
                            std::to_string(y.size()));
  }
  std::vector<double> by_mode(e.s);
  for (std::size_t j = 0; j < e.s; ++j) by_mode[e.importance_order[j]] = y[j];
  return sample_impl(e, zbar, level, [&](std::size_t n) { return by_mode[n]; });
}

FieldRealization sample_field_modes(const CirculantEmbedding& e, const MeanField& zbar,
                                    std::span<const double> y_modes, int level) {
  if (y_modes.size() != e.s) {
    throw DimensionMismatch("sample_field_modes: expected " + std::to_string(e.s) + " normals, got " +
                            std::to_string(y_modes.size()));
  }
  return sample_impl(e, zbar, level, [&](std::size_t n) { return y_modes[n]; });
}

FieldRealization constant_field(const UniformGrid& grid, double value, int level) {
  if (!(value > 0.0)) throw DomainError("constant_field: value must be positive");
  FieldRealization f;
  f.level = level;
  f.grid = grid;
  f.values.assign(grid.size(), value);
  f.log_values.assign(grid.size(), std::log(value));
  return f;
}

double eval_field(const FieldRealization& f, std::span<const double> x) {
  const int d = f.grid.dim;
  if (static_cast<int>(x.size()) != d) throw DimensionMismatch("eval_field: point dimension mismatch");
  const int n = f.grid.points_per_axis;
  const double inv_h = static_cast<double>(n - 1);

  int cell[3] = {0, 0, 0};
  double t[3] = {0.0, 0.0, 0.0};
  for (int a = 0; a < d; ++a) {
    const double xa = x[static_cast<std::size_t>(a)];
    if (!(xa >= 0.0 && xa <= 1.0)) throw DomainError("eval_field: point outside the unit cube");
    const double scaled = xa * inv_h;
    const int c = std::min(static_cast<int>(std::floor(scaled)), n - 2);
    cell[a] = c;
    t[a] = scaled - c;
  }

  double result = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    std::size_t idx = 0;
    std::size_t stride = 1;
    for (int a = 0; a < d; ++a) {
      const int bit = (corner >> a) & 1;
      w *= bit ? t[a] : 1.0 - t[a];
      idx += static_cast<std::size_t>(cell[a] + bit) * stride;
      stride *= static_cast<std::size_t>(n);
    }
    if (w != 0.0) result += w * f.values[idx];
  }
  return result;
}

FieldRealization restrict_to_coarse(const FieldRealization& f, const UniformGrid& coarse) {
  if (!f.grid.contains(coarse)) throw NestingViolation("restrict_to_coarse: coarse grid is not nested in the fine grid");
  const std::size_t ratio =
      static_cast<std::size_t>((f.grid.points_per_axis - 1) / (coarse.points_per_axis - 1));
  const std::size_t nf = static_cast<std::size_t>(f.grid.points_per_axis);

  FieldRealization r;
  r.level = f.level > 0 ? f.level - 1 : 0;
  r.grid = coarse;
  const std::size_t npts = coarse.size();
  r.log_values.resize(npts);
  r.values.resize(npts);
  for (std::size_t i = 0; i < npts; ++i) {
    const auto mi = coarse.multi_index(i);
    std::size_t fine = 0;
    std::size_t stride = 1;
    for (auto c : mi) {
      fine += static_cast<std::size_t>(c) * ratio * stride;
      stride *= nf;
    }
    r.log_values[i] = f.log_values[fine];
    r.values[i] = f.values[fine];
  }
  return r;
}

}  // namespace mlqmc
