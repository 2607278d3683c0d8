#pragma once

#include <functional>
#include <vector>

// Adaptive Gauss-Kronrod (G7/K15) quadrature.  Used for normalization
// oracles, the generic numeric base CDF, and test cross-checks; abs/rel
// tolerances default to 1e-10 with at most 2000 subdivisions.

namespace pivotblend {

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;   // accumulated Kronrod error estimate
  int subdivisions = 0;
  bool converged = false;
};

// Integrate f over the finite interval [a, b].  Globally adaptive: the
// segment with the largest error estimate is bisected until the summed
// error drops below max(abs_tol, rel_tol * |integral|).
QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, double abs_tol = 1e-10,
                           double rel_tol = 1e-10, int max_subdiv = 2000);

// Integrate across known breakpoints (jumps or kinks): runs the adaptive
// rule on each consecutive pair of `points` and sums.  Points must be
// sorted; an open rule cannot see a jump hiding next to a segment edge, so
// callers should list every known discontinuity.
QuadratureResult integrate_segmented(const std::function<double(double)>& f,
                                     const std::vector<double>& points,
                                     double abs_tol = 1e-10,
                                     double rel_tol = 1e-10,
                                     int max_subdiv = 2000);

// Truncation bounds for a nonnegative integrand with a single bulk around
// `center`: expands outward by doubling until f falls below 1e-16 times its
// value near the center.  `lower_support` / `upper_support` clip the search.
void truncation_bounds(const std::function<double(double)>& f, double center,
                       double* a, double* b,
                       double lower_support = -1e308,
                       double upper_support = 1e308);

}  // namespace pivotblend
