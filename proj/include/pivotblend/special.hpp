#pragma once

// Scalar special functions shared by the density and diagnostic code.
// Everything here is deterministic double-precision with no global state.

namespace pivotblend {

inline constexpr double kSqrt2 = 1.4142135623730950488;
inline constexpr double kSqrt2Pi = 2.5066282746310005024;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// Standard normal density.
double normal_pdf(double x);

// Standard normal CDF, accurate in both tails (erfc based).
double normal_cdf(double x);

// Inverse standard normal CDF for u in (0,1).
// Rational approximation refined by one Halley step; |err| < 1e-15 over
// u in [1e-300, 1-1e-16].
double normal_quantile(double u);

// Regularized lower incomplete gamma P(a,x) = gamma(a,x)/Gamma(a), a > 0,
// x >= 0.  Series for x < a+1, continued fraction otherwise.
double gamma_p(double a, double x);

// Inverse of gamma_p in x for u in [0,1): smallest x with P(a,x) = u.
double gamma_p_inv(double a, double u);

// log(1 + exp(x)) without overflow.
double log1pexp(double x);

// Kolmogorov limiting tail Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2
// lambda^2); the asymptotic p-value of a KS statistic at lambda =
// sqrt(n) * D.
double kolmogorov_q(double lambda);

}  // namespace pivotblend
