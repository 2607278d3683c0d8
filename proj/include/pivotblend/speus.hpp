#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "pivotblend/densities.hpp"
#include "pivotblend/optimize.hpp"

// Joint maximum-likelihood estimation of a linear model with skewed
// pivot-blend errors: y = X beta + alpha + e, e ~ SP(base; m, sigma, nu).
// The fit minimizes
//
//   n log Z + sum_i rho((r_i - m)/sigma + m) 1{r_i <= m}
//           + rho((r_i - m)/nu    + m) 1{r_i >  m}
//   + tau_scale/2 (sigma^-2 + nu^-2) + tau_pivot/2 m^2
//
// over (beta, alpha, log sigma, log nu, m), where rho = -log of the base
// density and Z = Phi(m) sigma + (1 - Phi(m)) nu.  The ridge terms keep the
// scales away from zero and the pivot anchored; both default to 1e-4 * n.

namespace pivotblend {

struct SpeusProblem {
  Eigen::MatrixXd x;  // n x p design, no intercept column
  Eigen::VectorXd y;
  BaseDensity base = BaseDensity::gaussian();
  bool include_intercept = true;
};

struct FitOptions {
  double tau_scale = -1.0;  // < 0 means the 1e-4 * n default
  double tau_pivot = -1.0;
  bool equal_scales = false;
  bool fix_m = false;
  double m_fixed = 0.0;
  std::vector<double> m_grid_quantiles = {0.1, 0.2, 0.3, 0.4, 0.5,
                                          0.6, 0.7, 0.8, 0.9};
  OptimOptions optim;
};

struct StartTrace {
  double m0 = 0.0;
  double alpha0 = 0.0;
  double value = 0.0;
  int iters = 0;
  bool converged = false;
  bool feasible = true;
  std::string note;
};

struct SPFit {
  Eigen::VectorXd beta;
  double alpha = 0.0;
  SkewSpec skew;
  double objective = 0.0;
  bool converged = false;
  int iters = 0;
  double grad_norm = 0.0;
  int start_index = -1;
  std::vector<StartTrace> starts;
  std::vector<std::string> warnings;
};

// Thrown when every start of the multi-start fit fails; carries the
// per-start traces in the message.
struct OptimizationFailure : std::runtime_error {
  explicit OptimizationFailure(const std::string& what)
      : std::runtime_error(what) {}
};

struct SpeusParams {
  Eigen::VectorXd beta;
  double alpha = 0.0;
  SkewSpec skew;
};

// Packed parameter layout (order fixed): beta[0..p), then alpha when the
// problem has an intercept, then log sigma, then log nu unless
// equal_scales, then m unless fix_m.
int packed_size(const SpeusProblem& problem, const FitOptions& opts);
Eigen::VectorXd pack_params(const SpeusProblem& problem, const FitOptions& opts,
                            const SpeusParams& params);
SpeusParams unpack_params(const SpeusProblem& problem, const FitOptions& opts,
                          const Eigen::VectorXd& z);

// Objective (and gradient, when grad != nullptr) at a packed point.
// Returns +inf when a residual leaves the support of the blended density.
double speus_objective(const SpeusProblem& problem, const FitOptions& opts,
                       const Eigen::VectorXd& z,
                       Eigen::VectorXd* grad = nullptr);

// Multi-start joint fit.  Starts scan pivot candidates over empirical
// quantiles of y (for bases on the whole line) or base quantiles paired
// with matching intercepts (for bases with a support edge), always adding
// m = 0.  Starts that are infeasible after scale inflation are recorded and
// skipped; if every start fails an OptimizationFailure is thrown.
SPFit speus_fit(const SpeusProblem& problem, const FitOptions& opts = {});

// Single-start fit from supplied parameters (the same repair / continuation
// / polish pipeline as one multi-start arm).  Used to warm-start refits on
// perturbed data, e.g. bootstrap resamples.  Throws OptimizationFailure
// when the start cannot be made feasible.
SPFit speus_fit_warm(const SpeusProblem& problem, const FitOptions& opts,
                     const SpeusParams& start);

// Bounded-loss location/pivot fit with the scales held fixed: minimizes
// sum_i rho-terms + n chi0 log Z(m) over (beta, alpha, m) only.  Bounded
// rho has no normalizable pseudo-density, so the base CDF/PDF pair for the
// normalizer must be supplied (standard normal by default).
struct BoundedLoss {
  std::function<double(double)> rho;
  std::function<double(double)> drho;
  double bound = 0.0;  // sup of rho
  std::string name;
};

BoundedLoss tukey_loss(double c = 4.685);
BoundedLoss hampel_loss(double a = 2.0, double b = 4.0, double c = 8.0);

struct BoundedFitSpec {
  BoundedLoss loss = tukey_loss();
  double sigma = 1.0;
  double nu = 1.0;
  double chi0 = 1.0;
  std::function<double(double)> base_cdf;  // defaults to standard normal
  std::function<double(double)> base_pdf;
};

int bounded_packed_size(const SpeusProblem& problem, const FitOptions& opts);
double bounded_objective(const SpeusProblem& problem, const BoundedFitSpec& spec,
                         const FitOptions& opts, const Eigen::VectorXd& z,
                         Eigen::VectorXd* grad = nullptr);
SPFit speus_fit_bounded(const SpeusProblem& problem, const BoundedFitSpec& spec,
                        const FitOptions& opts = {});

// Pairwise-difference evaluation criterion: the exponential-base blend
// applied to |r_i - r_j| over ordered pairs i != j, plus the pair-count
// normalizer term.  O(n^2); evaluation only, not optimized over.
double rank_criterion(const Eigen::VectorXd& residuals, const SkewSpec& skew);

// When the two scales agree (relative difference below 1e-8) or the pivot
// leaves [min r, max r], the pivot is absorbable into the intercept as
// alpha' = alpha + (1 - sigma) m.
struct AbsorbResult {
  bool absorbed = false;
  double alpha_prime = 0.0;
  std::string reason;
};
AbsorbResult absorb_pivot(const SPFit& fit, double resid_min,
                          double resid_max);

}  // namespace pivotblend
