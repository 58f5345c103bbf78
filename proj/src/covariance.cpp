#include "mlqmc/covariance.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "mlqmc/errors.hpp"

namespace mlqmc {

namespace {

constexpr double kSmallArgument = 1e-8;

}  // namespace

double matern_cov(const MaternParams& p, double r) {
  if (!p.valid()) throw DomainError("matern_cov: parameters must be positive");
  if (!(r >= 0.0)) throw DomainError("matern_cov: distance must be nonnegative");
  if (r == 0.0) return p.sigma2;

  const double t = std::sqrt(2.0 * p.nu) * r / p.lambda_c;
  if (t < kSmallArgument) {
    // t^nu K_nu(t) -> 2^(nu-1) Gamma(nu), so the prefactor cancels exactly.
    return p.sigma2;
  }
  // K_nu underflows past t ~ 745; the covariance is zero to double precision there.
  if (t > 700.0) return 0.0;

  const double log_scale = (1.0 - p.nu) * std::log(2.0) - boost::math::lgamma(p.nu) + p.nu * std::log(t);
  return p.sigma2 * std::exp(log_scale) * boost::math::cyl_bessel_k(p.nu, t);
}

CovarianceKernel matern_kernel(const MaternParams& p) {
  if (!p.valid()) throw DomainError("matern_kernel: parameters must be positive");
  return [p](double r) { return matern_cov(p, r); };
}

MeanField MeanField::constant(double value) {
  return MeanField{[value](std::span<const double>) { return value; }};
}

}  // namespace mlqmc
