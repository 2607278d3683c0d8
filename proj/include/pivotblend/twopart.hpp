#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pivotblend/densities.hpp"
#include "pivotblend/optimize.hpp"
#include "pivotblend/speus.hpp"

// Sparse skewed two-part model for semicontinuous outcomes (y >= 0 with
// exact zeros).  A logistic part models P(y = 0 | x) over all N rows; the
// positive rows enter a pivot-blend regression on the transformed response
// T(y).  Variable selection couples the two parts: with penalty rows
// B_k = (c_x_k beta_k, c_z_k b_k), the criterion is
//
//   [blend loss on T(y+) - X beta - alpha]  (with the tau ridge)
// + sum_i [ log(1 + exp(eta_i)) - 1{y_i = 0} eta_i ],  eta = Z b + b0
// + lambda sum_k || B_k ||_2
//
// so a covariate is kept only when it earns its place in either part.  The
// scalings c default to per-column design norms (making lambda insensitive
// to design size) and can be switched to the plain (sqrt n, sqrt N) pair.

namespace pivotblend {

enum class TransformKind { Log, Identity, Power };

struct Transform {
  TransformKind kind = TransformKind::Log;
  double power = 0.5;  // Box-Cox exponent for TransformKind::Power

  double operator()(double y) const;
};

struct TwoPartProblem {
  Eigen::MatrixXd x;  // N x p shared design, no intercept column
  Eigen::VectorXd y;  // N-vector, >= 0, zeros allowed
  Transform transform;
  BaseDensity base = BaseDensity::huber_pseudo();
  double tau = -1.0;             // < 0 selects the 1e-4 * n_positive default
  bool column_normalize = true;  // per-column penalty scaling
};

// Derived views of a problem: the zero/positive partition, the transformed
// positive responses, and the penalty column scalings.
struct TwoPartData {
  Eigen::MatrixXd x_pos;       // n x p rows with y > 0
  Eigen::VectorXd ty;          // transformed positive responses
  Eigen::VectorXd zero_flag;   // N-vector, 1 when y == 0
  std::vector<int> pos_index;  // rows of x forming x_pos
  Eigen::VectorXd col_scale_x;  // penalty scaling per column, continuous part
  Eigen::VectorXd col_scale_z;  // penalty scaling per column, binary part
  int n_pos = 0;
  int n_zero = 0;
  std::vector<std::string> warnings;  // e.g. positives below 1e-12
};

TwoPartData two_part_partition(const TwoPartProblem& problem);

struct TwoPartParams {
  Eigen::VectorXd beta;  // p, continuous part
  double alpha = 0.0;    // continuous intercept
  Eigen::VectorXd b;     // p, binary part
  double b0 = 0.0;       // binary intercept
  SkewSpec skew;
};

struct TwoPartFit {
  Eigen::VectorXd beta;
  double alpha = 0.0;
  Eigen::VectorXd b;
  double b0 = 0.0;
  SkewSpec skew;
  std::vector<int> support;  // columns with a nonzero penalty row
  double lambda = 0.0;
  double objective = 0.0;
  std::vector<double> objective_trace;  // per outer iteration
  bool converged = false;
  int outer_iters = 0;
  std::vector<std::string> warnings;
};

struct S2Options {
  int max_outer = 200;
  double outer_tol = 1e-8;
  OptimOptions optim;
  bool has_warm = false;
  TwoPartParams warm;
};

// Exact criterion value (nondifferentiable penalty included).
double s2_objective(const TwoPartProblem& problem, const TwoPartParams& params,
                    double lambda);

// Smallest lambda for which the null model (all penalty rows zero,
// intercepts and skew fitted) satisfies the stationarity condition; above
// it the fit keeps every row at zero.
double lambda_max(const TwoPartProblem& problem);

// Fit at a fixed lambda by majorize-minimize on the group penalty with
// alternating quasi-Newton blocks.  The outer objective must descend; a
// rise beyond 1e-10 slack throws std::logic_error.
TwoPartFit s2_fit(const TwoPartProblem& problem, double lambda,
                  const S2Options& opts = {});

// Warm-started fits on a log-spaced grid from lambda_max down to
// 1e-3 lambda_max.
std::vector<TwoPartFit> s2_path(const TwoPartProblem& problem,
                                int n_lambda = 20, const S2Options& opts = {});

struct ScvResult {
  double lambda_min = 0.0;
  double lambda_1se = 0.0;
  Eigen::VectorXd lambda_grid;
  Eigen::MatrixXd cv_table;  // folds x n_lambda validation NLL
  TwoPartFit fit;  // full-data fit at lambda_1se (one-standard-error rule)
};

// Selective cross-validation: per fold and per lambda, take the support
// selected on the training part, refit it unpenalized, and score the
// validation negative log-likelihood.  Folds are stratified over the
// zero/positive split.  lambda_min minimizes the mean validation loss;
// the returned fit applies the one-standard-error rule (lambda_1se).
ScvResult select_lambda_scv(const TwoPartProblem& problem, int folds = 5,
                            int n_lambda = 20, std::uint64_t seed = 1,
                            const S2Options& opts = {});

// Negative gradient of the unpenalized loss at the supplied parameters, in
// the (eta, m, inverse-scale) coordinates.  eps_eta stacks the continuous
// rows (n) before the binary rows (N).  When the continuous loss derivative
// is bounded (Huber pseudo-density base, |rho'| <= delta) the analytic
// componentwise bounds are filled in; otherwise bounds_available is false.
struct EffectiveNoise {
  Eigen::VectorXd eps_eta;       // n + N
  Eigen::VectorXd eps_m;         // n
  Eigen::VectorXd eps_sigma_nu;  // 2n: sigma block then nu block
  bool bounds_available = false;
  double rho_bound = 0.0;       // M
  double logistic_bound = 1.0;  // B
  double bound_eta = 0.0;       // M/(sigma^nu min) + B
  double bound_m = 0.0;
  Eigen::VectorXd bound_sigma_nu;  // 2n, M|raw_i| + max(sigma, nu)
};

EffectiveNoise effective_noise(const TwoPartProblem& problem,
                               const TwoPartParams& params);

// Theory-guided penalty level A * omega * (log p)^(1/q).  omega <= 0 asks
// for the automatic bounded-loss value M/(min(sigma, nu)) + 1, which
// requires a base with bounded loss derivative.
double lambda_theory(const TwoPartProblem& problem, const SkewSpec& skew,
                     double q = 2.0, double a_const = 1.0,
                     double omega = -1.0);

}  // namespace pivotblend
