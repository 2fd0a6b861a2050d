#include <cmath>

#include "doctest.h"
#include "pnrd/error.hpp"
#include "pnrd/special.hpp"

using namespace pnrd::special;

namespace {

// Poisson CDF by direct summation of terms (independent of the gamma code).
double poisson_cdf_direct(int n, double x) {
  double term = std::exp(-x);
  double sum = term;
  for (int k = 1; k <= n; ++k) {
    term *= x / k;
    sum += term;
  }
  return sum;
}

}  // namespace

TEST_CASE("log_binomial matches small exact values") {
  CHECK(std::exp(log_binomial(5, 2)) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(std::exp(log_binomial(40, 20)) == doctest::Approx(137846528820.0).epsilon(1e-12));
  CHECK(log_binomial(3, 4) == -INFINITY);
  CHECK(log_binomial(7, 0) == 0.0);
}

TEST_CASE("regularized upper gamma equals the Poisson CDF at integer order") {
  for (int n : {0, 1, 2, 5, 10, 30}) {
    for (double x : {0.01, 0.5, 1.0, 3.0, 9.5, 11.0, 25.0, 60.0}) {
      const double direct = poisson_cdf_direct(n, x);
      CAPTURE(n);
      CAPTURE(x);
      CHECK(regularized_gamma_q(n + 1.0, x) == doctest::Approx(direct).epsilon(1e-12));
      CHECK(regularized_gamma_p(n + 1.0, x) + regularized_gamma_q(n + 1.0, x) ==
            doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("regularized gamma edge values") {
  CHECK(regularized_gamma_p(3.0, 0.0) == 0.0);
  CHECK(regularized_gamma_q(3.0, 0.0) == 1.0);
  CHECK_THROWS_AS(regularized_gamma_q(0.0, 1.0), pnrd::DomainError);
  CHECK_THROWS_AS(regularized_gamma_p(1.0, -1.0), pnrd::DomainError);
}

TEST_CASE("chi-square quantiles") {
  // Two degrees of freedom: CDF = 1 - e^{-x/2}.
  CHECK(chi_square_quantile(0.99, 2.0) == doctest::Approx(-2.0 * std::log(0.01)).epsilon(1e-9));
  // Tabulated 99th percentile for 10 dof.
  CHECK(chi_square_quantile(0.99, 10.0) == doctest::Approx(23.2093).epsilon(1e-5));
}
