#pragma once

#include <cstdint>

// Special functions shared by the POVM and photocount modules.
namespace pnrd::special {

double log_factorial(std::int64_t n);

/// log C(n, k); -inf when k is outside [0, n].
double log_binomial(std::int64_t n, std::int64_t k);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double regularized_gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
///
/// For integer a = n + 1 this is the Poisson CDF, e^{-x} e_n(x). Evaluated by
/// series when x < a + 1 and by continued fraction otherwise, so the smaller
/// of P and Q is always computed directly.
double regularized_gamma_q(double a, double x);

/// Inverse CDF of the chi-square distribution with `dof` degrees of freedom.
double chi_square_quantile(double probability, double dof);

}  // namespace pnrd::special
