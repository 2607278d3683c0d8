#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

// Dense BFGS with backtracking line search.  Objectives may return +inf
// (infeasible step); the line search treats that as "too far" and shrinks.

namespace pivotblend {

// Evaluate the objective at x; when grad is non-null, also fill the
// gradient (same length as x).
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimOptions {
  double grad_tol = 1e-6;   // sup-norm of the gradient
  double obj_tol = 1e-10;   // relative objective change
  int max_iters = 500;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd grad;
  int iters = 0;
  bool converged = false;
  std::string note;
};

// Minimize from x0.  Requires f(x0) to be finite; throws otherwise.
OptimResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                          const OptimOptions& opts = {});

struct SimplexOptions {
  double f_tol_rel = 1e-10;  // spread of vertex values, relative to best
  double x_tol = 1e-8;       // simplex diameter, relative to best vertex
  int max_evals = 20000;
  double init_step = 0.05;   // per-coordinate offset of the initial simplex
  int restarts = 1;          // rebuild a fresh simplex at the best point
};

// Derivative-free Nelder-Mead simplex minimizer.  Infinite objective values
// are ordered as worst, so hard support boundaries simply repel vertices;
// use this to finish fits whose optimum sits on such a boundary, where a
// gradient line search collapses.  Requires f(x0) to be finite.
OptimResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                             const SimplexOptions& opts = {});

// Central finite-difference gradient, used by the self-checking tests.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h = 1e-6);

}  // namespace pivotblend
