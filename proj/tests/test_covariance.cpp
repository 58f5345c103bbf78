#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mlqmc/covariance.hpp"
#include "mlqmc/errors.hpp"

using namespace mlqmc;

namespace {

// Closed forms of the half-integer Matérn family.
double matern_half_integer(const MaternParams& p, double r) {
  if (p.nu == 0.5) return p.sigma2 * std::exp(-r / p.lambda_c);
  if (p.nu == 1.5) {
    const double t = std::sqrt(3.0) * r / p.lambda_c;
    return p.sigma2 * (1.0 + t) * std::exp(-t);
  }
  const double t = std::sqrt(5.0) * r / p.lambda_c;
  return p.sigma2 * (1.0 + t + t * t / 3.0) * std::exp(-t);
}

}  // namespace

TEST_CASE("matern reduces to the variance at zero distance") {
  CHECK(matern_cov({0.1, 1.0, 0.5}, 0.0) == 0.1);
  CHECK(matern_cov({0.1, 1.0, 2.5}, 0.0) == 0.1);
  CHECK(matern_cov({2.0, 0.3, 1.7}, 0.0) == 2.0);
}

TEST_CASE("matern with nu = 1/2 is the exponential covariance") {
  CHECK(matern_cov({0.1, 1.0, 0.5}, 1.0) == doctest::Approx(0.1 * std::exp(-1.0)).epsilon(1e-13));
  CHECK(matern_cov({0.1, 1.0, 0.5}, 1.0) == doctest::Approx(0.0367879).epsilon(1e-6));
}

TEST_CASE("matern with nu = 5/2 matches its closed form") {
  const MaternParams p{0.1, 1.0, 2.5};
  const double expected = 0.1 * (1.0 + std::sqrt(5.0) + 5.0 / 3.0) * std::exp(-std::sqrt(5.0));
  CHECK(matern_cov(p, 1.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("general Bessel path agrees with half-integer closed forms") {
  for (double nu : {0.5, 1.5, 2.5}) {
    for (double lambda : {0.3, 1.0}) {
      const MaternParams p{0.1, lambda, nu};
      for (int k = 0; k < 200; ++k) {
        const double r = std::pow(10.0, -6.0 + 7.0 * k / 199.0);
        const double exact = matern_half_integer(p, r);
        const double got = matern_cov(p, r);
        CHECK(std::abs(got - exact) <= 1e-10 * exact);
      }
    }
  }
}

TEST_CASE("matern is continuous at the origin and monotone") {
  for (double nu : {0.5, 1.0, 2.5, 4.0}) {
    const MaternParams p{0.1, 1.0, nu};
    CHECK(std::abs(matern_cov(p, 1e-12) - p.sigma2) <= 1e-6 * p.sigma2);
    double prev = matern_cov(p, 0.0);
    for (int k = 1; k <= 400; ++k) {
      const double r = 0.025 * k;
      const double v = matern_cov(p, r);
      CHECK(v > 0.0);
      CHECK(v <= p.sigma2);
      CHECK(v <= prev + 1e-15);
      prev = v;
    }
  }
}

TEST_CASE("matern Gram matrices are positive semidefinite") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(2, 8);
  for (double nu : {0.5, 1.5, 2.5}) {
    const MaternParams p{0.1, 1.0, nu};
    for (int trial = 0; trial < 50; ++trial) {
      const int n = count(eng);
      std::vector<std::array<double, 2>> pts(static_cast<std::size_t>(n));
      for (auto& x : pts) x = {u(eng), u(eng)};
      Eigen::MatrixXd g(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const double dx = pts[static_cast<std::size_t>(i)][0] - pts[static_cast<std::size_t>(j)][0];
          const double dy = pts[static_cast<std::size_t>(i)][1] - pts[static_cast<std::size_t>(j)][1];
          g(i, j) = matern_cov(p, std::hypot(dx, dy));
        }
      }
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * p.sigma2);
    }
  }
}

TEST_CASE("matern rejects invalid input") {
  CHECK_THROWS_AS(matern_cov({0.1, 1.0, 0.5}, -1.0), DomainError);
  CHECK_THROWS_AS(matern_cov({0.0, 1.0, 0.5}, 1.0), DomainError);
  CHECK_THROWS_AS(matern_cov({0.1, -1.0, 0.5}, 1.0), DomainError);
  CHECK_THROWS_AS(matern_cov({0.1, 1.0, 0.0}, 1.0), DomainError);
}
