#pragma once

#include <functional>
#include <span>

namespace mlqmc {

/// Matérn covariance parameters: variance, correlation length, smoothness.
struct MaternParams {
  double sigma2 = 0.1;
  double lambda_c = 1.0;
  double nu = 0.5;

  bool valid() const { return sigma2 > 0.0 && lambda_c > 0.0 && nu > 0.0; }
};

/// Stationary covariance as a function of the Euclidean distance only.
using CovarianceKernel = std::function<double(double)>;

/// Matérn covariance at distance r. Exactly sigma2 at r == 0; for scaled
/// distances below 1e-8 the small-argument limit of t^nu K_nu(t) is used.
double matern_cov(const MaternParams& p, double r);

CovarianceKernel matern_kernel(const MaternParams& p);

/// Mean of the underlying Gaussian field, evaluated pointwise.
struct MeanField {
  std::function<double(std::span<const double>)> zbar;

  static MeanField constant(double value);
  double operator()(std::span<const double> x) const { return zbar ? zbar(x) : 0.0; }
};

}  // namespace mlqmc
