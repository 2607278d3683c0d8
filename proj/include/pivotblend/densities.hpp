#pragma once

#include <Eigen/Dense>
#include <string>

#include "pivotblend/rng.hpp"

// Skewed pivot-blend distributions.
//
// Starting from a base density phi with CDF Phi, pick a pivot m inside the
// support and stretch the two sides by separate scales:
//
//   f(y) = [ phi((y-m)/sigma + m) 1{y<=m} + phi((y-m)/nu + m) 1{y>m} ] / Z,
//   Z    = Phi(m) sigma + (1 - Phi(m)) nu.
//
// The density stays continuous at m, keeps the left mass at
// Phi(m) sigma / Z, and reduces to a plain scale family when sigma == nu.
// A two-base variant pastes different densities on the two sides with
// cross-weights that keep the junction continuous.

namespace pivotblend {

enum class BaseKind {
  Gaussian,
  Laplace,
  Gumbel,
  HalfNormal,
  MaxwellBoltzmann,
  DoubleRayleigh,
  GDG,
  Exponential,
  HuberPseudo,
};

// A standardized base density.  GDG carries shape parameters
// (gamma, d, p) with density p / (2 gamma^d Gamma(d/p)) |y|^{d-1}
// exp(-|y|^p / gamma^p); HuberPseudo carries the Huber knot delta and is
// normalized at construction.  The remaining kinds have no parameters.
class BaseDensity {
 public:
  static BaseDensity gaussian();
  static BaseDensity laplace();
  static BaseDensity gumbel();
  static BaseDensity half_normal();
  static BaseDensity maxwell_boltzmann();
  static BaseDensity double_rayleigh();
  static BaseDensity gdg(double gamma, double d, double p);
  static BaseDensity exponential();
  static BaseDensity huber_pseudo(double delta = 1.345);

  // Parses names like "gaussian", "gdg(1,2,1.5)", "huber(1.345)".
  static BaseDensity parse(const std::string& name);

  BaseKind kind() const { return kind_; }
  std::string name() const;

  double pdf(double y) const;
  // loss(y) = -log pdf(y), +inf outside the support.
  double loss(double y) const;
  // d/dy loss(y); finite only where pdf > 0.
  double dloss(double y) const;
  double cdf(double y) const;
  // Inverse CDF for u in [0,1]; endpoints map to the support bounds.
  double quantile(double u) const;

  double support_lower() const;
  double support_upper() const;

  // Shape parameters; meaningful for GDG (gamma,d,p) and HuberPseudo
  // (delta in param0).
  double param0() const { return p0_; }
  double param1() const { return p1_; }
  double param2() const { return p2_; }

 private:
  BaseDensity(BaseKind kind, double p0, double p1, double p2);

  BaseKind kind_;
  double p0_ = 0.0, p1_ = 0.0, p2_ = 0.0;
  double log_norm_ = 0.0;  // log of the normalizing constant of exp(-loss)
};

struct SkewSpec {
  double m = 0.0;
  double sigma = 1.0;
  double nu = 1.0;
};

class SPDistribution {
 public:
  // Throws std::invalid_argument unless sigma, nu > 0 and m is finite.
  SPDistribution(BaseDensity base, SkewSpec skew);

  const BaseDensity& base() const { return base_; }
  const SkewSpec& skew() const { return skew_; }

  // Phi(m), the base mass left of the pivot.
  double base_cdf_at_pivot() const { return q_; }
  // Z = Phi(m) sigma + (1 - Phi(m)) nu.
  double normalizer() const { return z_; }
  // F(m) = Phi(m) sigma / Z, the blended mass left of the pivot.
  double left_mass() const { return skew_.sigma * q_ / z_; }
  // True when the pivot carries no base mass on one side, so the blend
  // degenerates to a one-sided location-scale family.
  bool pivot_outside_support() const { return q_ <= 0.0 || q_ >= 1.0; }

  double pdf(double y) const;
  double cdf(double y) const;
  double quantile(double u) const;

  // Lower edge of the blended support (the mapped base support edge);
  // -inf when the base lives on the whole line.  The pdf jumps there, which
  // matters when integrating it numerically.
  double support_lower() const;

  // Forward construction: draw the side with probability left_mass(), then
  // the conditional base variable by inverse CDF, then map affinely.  Two
  // uniforms per draw, in a fixed order.
  double sample(CounterRng& rng) const;
  Eigen::VectorXd sample(int n, CounterRng& rng) const;

 private:
  BaseDensity base_;
  SkewSpec skew_;
  double q_;  // Phi(m)
  double z_;  // normalizer
};

// Two-base pasting: density `left` below the pivot, `right` above, with
// cross-weights right.pdf(m), left.pdf(m) keeping the junction continuous:
//
//   g(y) = [ right.pdf(m) left.pdf((y-m)/sigma + m) 1{y<=m}
//          + left.pdf(m) right.pdf((y-m)/nu + m) 1{y>m} ] / C,
//   C    = right.pdf(m) left.cdf(m) sigma
//        + left.pdf(m) (1 - right.cdf(m)) nu.
class PastedDistribution {
 public:
  PastedDistribution(BaseDensity left, BaseDensity right, SkewSpec skew);

  double pdf(double y) const;
  double normalizer() const { return c_; }

  const BaseDensity& left() const { return left_; }
  const BaseDensity& right() const { return right_; }
  const SkewSpec& skew() const { return skew_; }

 private:
  BaseDensity left_, right_;
  SkewSpec skew_;
  double c_;
};

// Generic numeric base CDF: adaptive quadrature of exp(-loss) from the
// lower support end to y, divided by the total mass.  Oracle path for
// cross-checking the closed forms; throws if exp(-loss) is not integrable.
double base_cdf_numeric(const BaseDensity& base, double y);

// Vectorized conveniences.
Eigen::VectorXd sp_pdf(const SPDistribution& d, const Eigen::VectorXd& y);
Eigen::VectorXd sp_cdf(const SPDistribution& d, const Eigen::VectorXd& y);
Eigen::VectorXd sp_quantile(const SPDistribution& d, const Eigen::VectorXd& u);

}  // namespace pivotblend
