#pragma once

#include <Eigen/Dense>
#include <functional>

#include "pivotblend/densities.hpp"

// Backward pivot-blend diagnostics.  Residuals from a fitted blend are
// mapped back to the base scale, branch by branch:
//
//   r <= m:  u = (r - m)/sigma + m      r > m:  u = (r - m)/nu + m
//
// Under a correct fit the mapped points are base draws conditioned on their
// branch, but the branch *counts* follow the blend's split (sigma q / Z on
// the left), not the base's (q).  Reweighting each left point by
// nu / (L nu + R sigma) and each right point by sigma / (L nu + R sigma)
// (L, R = branch counts) restores the base proportions using only observed
// counts and the fitted scales, so the weighted sample should look like the
// base density itself.

namespace pivotblend {

struct WeightedSample {
  Eigen::VectorXd values;   // backward-mapped residuals, input order
  Eigen::VectorXd weights;  // positive, sum to 1
  double q_hat = 0.0;       // estimated base mass left of the pivot
  int n_left = 0;
  int n_right = 0;
};

WeightedSample backward_blend(const Eigen::VectorXd& residuals,
                              const SkewSpec& skew);

// Right-continuous weighted empirical CDF.
class WeightedEcdf {
 public:
  explicit WeightedEcdf(const WeightedSample& sample);
  double operator()(double x) const;
  // Smallest sample value whose cumulative weight reaches p (clamped).
  double quantile(double p) const;
  const Eigen::VectorXd& points() const { return points_; }
  const Eigen::VectorXd& cumulative() const { return cum_; }

 private:
  Eigen::VectorXd points_;  // sorted
  Eigen::VectorXd cum_;
};

struct KsResult {
  double statistic = 0.0;  // sup_x |F_hat(x) - F0(x)|
  double p_value = 1.0;    // asymptotic, at the Kish effective sample size
  double n_eff = 0.0;
};

KsResult weighted_ks(const WeightedSample& sample,
                     const std::function<double(double)>& cdf0);

struct KdeResult {
  Eigen::VectorXd grid;
  Eigen::VectorXd density;
  double bandwidth = 0.0;
  double n_eff = 0.0;
};

// Gaussian-kernel weighted KDE.  bandwidth <= 0 selects Silverman's rule
// 0.9 min(sd, IQR/1.34) n_eff^(-1/5) on the weighted sample.
KdeResult weighted_kde(const WeightedSample& sample,
                       const Eigen::VectorXd& grid, double bandwidth = 0.0);

struct DiagnosticsReport {
  WeightedSample sample;
  KsResult ks;
  Eigen::VectorXd bin_edges;       // bins + 1 entries
  Eigen::VectorXd bin_density;     // weighted histogram, density scale
  Eigen::VectorXd kde_grid;
  Eigen::VectorXd kde_density;
  Eigen::VectorXd base_density;    // base pdf on kde_grid, for overlay
  double bandwidth = 0.0;
  bool adequate = false;           // ks.p_value > 0.05
};

// Full backward diagnostic of residuals against a fitted blend.
DiagnosticsReport diagnose(const Eigen::VectorXd& residuals,
                           const SkewSpec& skew, const BaseDensity& base,
                           int bins = 50, int grid_points = 512);

}  // namespace pivotblend
