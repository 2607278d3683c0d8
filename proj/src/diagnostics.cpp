#include "pivotblend/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pivotblend/special.hpp"

namespace pivotblend {

WeightedSample backward_blend(const Eigen::VectorXd& residuals,
                              const SkewSpec& skew) {
  const int n = static_cast<int>(residuals.size());
  if (n == 0)
    throw std::invalid_argument("backward_blend: empty residual vector");
  if (!(skew.sigma > 0.0) || !(skew.nu > 0.0))
    throw std::invalid_argument("backward_blend: scales must be positive");
  WeightedSample out;
  out.values.resize(n);
  out.weights.resize(n);
  const double m = skew.m;
  for (int i = 0; i < n; ++i) {
    const bool left = residuals[i] <= m;
    const double sc = left ? skew.sigma : skew.nu;
    out.values[i] = (residuals[i] - m) / sc + m;
    out.n_left += left ? 1 : 0;
  }
  out.n_right = n - out.n_left;
  const double denom =
      out.n_left * skew.nu + out.n_right * skew.sigma;
  const double w_left = skew.nu / denom;
  const double w_right = skew.sigma / denom;
  for (int i = 0; i < n; ++i)
    out.weights[i] = residuals[i] <= m ? w_left : w_right;
  out.q_hat = out.n_left * skew.nu / denom;
  return out;
}

WeightedEcdf::WeightedEcdf(const WeightedSample& sample) {
  const int n = static_cast<int>(sample.values.size());
  std::vector<int> ord(n);
  std::iota(ord.begin(), ord.end(), 0);
  std::sort(ord.begin(), ord.end(), [&](int a, int b) {
    return sample.values[a] < sample.values[b];
  });
  points_.resize(n);
  cum_.resize(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    points_[i] = sample.values[ord[i]];
    acc += sample.weights[ord[i]];
    cum_[i] = acc;
  }
  if (n > 0) cum_[n - 1] = 1.0;  // absorb rounding in the final step
}

double WeightedEcdf::operator()(double x) const {
  const double* begin = points_.data();
  const double* end = begin + points_.size();
  const double* it = std::upper_bound(begin, end, x);
  if (it == begin) return 0.0;
  return cum_[static_cast<int>(it - begin) - 1];
}

double WeightedEcdf::quantile(double p) const {
  const int n = static_cast<int>(points_.size());
  for (int i = 0; i < n; ++i)
    if (cum_[i] >= p) return points_[i];
  return points_[n - 1];
}

KsResult weighted_ks(const WeightedSample& sample,
                     const std::function<double(double)>& cdf0) {
  WeightedEcdf ecdf(sample);
  const Eigen::VectorXd& pts = ecdf.points();
  const Eigen::VectorXd& cum = ecdf.cumulative();
  const int n = static_cast<int>(pts.size());
  KsResult out;
  for (int i = 0; i < n; ++i) {
    const double f0 = cdf0(pts[i]);
    const double lo = i == 0 ? 0.0 : cum[i - 1];
    out.statistic =
        std::max({out.statistic, std::fabs(cum[i] - f0), std::fabs(lo - f0)});
  }
  out.n_eff = 1.0 / sample.weights.squaredNorm();
  out.p_value = kolmogorov_q(std::sqrt(out.n_eff) * out.statistic);
  return out;
}

namespace {

double weighted_sd(const WeightedSample& s) {
  const double mean = s.weights.dot(s.values);
  return std::sqrt(
      (s.weights.array() * (s.values.array() - mean).square()).sum());
}

double silverman_bandwidth(const WeightedSample& s, double n_eff) {
  WeightedEcdf ecdf(s);
  const double sd = weighted_sd(s);
  const double iqr = ecdf.quantile(0.75) - ecdf.quantile(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = std::max(sd, 1e-3);
  return 0.9 * spread * std::pow(std::max(n_eff, 2.0), -0.2);
}

}  // namespace

KdeResult weighted_kde(const WeightedSample& sample,
                       const Eigen::VectorXd& grid, double bandwidth) {
  KdeResult out;
  out.grid = grid;
  out.n_eff = 1.0 / sample.weights.squaredNorm();
  out.bandwidth =
      bandwidth > 0.0 ? bandwidth : silverman_bandwidth(sample, out.n_eff);
  const double h = out.bandwidth;
  out.density.resize(grid.size());
  for (int g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    out.density[g] =
        (sample.weights.array() *
         (-0.5 * ((sample.values.array() - x) / h).square()).exp())
            .sum() *
        kInvSqrt2Pi / h;
  }
  return out;
}

DiagnosticsReport diagnose(const Eigen::VectorXd& residuals,
                           const SkewSpec& skew, const BaseDensity& base,
                           int bins, int grid_points) {
  if (bins < 1 || grid_points < 2)
    throw std::invalid_argument("diagnose: need bins >= 1, grid_points >= 2");
  DiagnosticsReport rep;
  rep.sample = backward_blend(residuals, skew);
  rep.ks = weighted_ks(rep.sample,
                       [&base](double x) { return base.cdf(x); });
  rep.adequate = rep.ks.p_value > 0.05;

  const double lo = rep.sample.values.minCoeff();
  const double hi = rep.sample.values.maxCoeff();
  const double pad = hi > lo ? 0.05 * (hi - lo) : 1.0;
  double a = lo - pad;
  double b = hi + pad;
  // Never chart outside the base support.
  a = std::max(a, base.support_lower());
  b = std::min(b, base.support_upper());
  if (!(b > a)) {
    a = lo;
    b = lo + 1.0;
  }

  rep.bin_edges.setLinSpaced(bins + 1, a, b);
  rep.bin_density.setZero(bins);
  const double width = (b - a) / bins;
  for (int i = 0; i < rep.sample.values.size(); ++i) {
    const double v = rep.sample.values[i];
    if (v < a || v > b) continue;
    int k = std::min(bins - 1, static_cast<int>((v - a) / width));
    rep.bin_density[k] += rep.sample.weights[i] / width;
  }

  Eigen::VectorXd grid(grid_points);
  grid.setLinSpaced(grid_points, a, b);
  KdeResult kde = weighted_kde(rep.sample, grid);
  rep.kde_grid = kde.grid;
  rep.kde_density = kde.density;
  rep.bandwidth = kde.bandwidth;
  rep.base_density.resize(grid_points);
  for (int g = 0; g < grid_points; ++g)
    rep.base_density[g] = base.pdf(grid[g]);
  return rep;
}

}  // namespace pivotblend
