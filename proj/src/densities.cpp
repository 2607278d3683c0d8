#include "pivotblend/densities.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pivotblend/quadrature.hpp"
#include "pivotblend/special.hpp"

namespace pivotblend {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.9189385332046727418;   // log sqrt(2 pi)
const double kLogSqrtPiOver2 = 0.2257913526447274323;  // log sqrt(pi/2)

double huber_rho(double y, double delta) {
  double a = std::fabs(y);
  if (a <= delta) return 0.5 * y * y;
  return delta * a - 0.5 * delta * delta;
}

// Total mass of exp(-huber_rho): Gaussian core plus two exponential tails.
double huber_mass(double delta) {
  return kSqrt2Pi * (2.0 * normal_cdf(delta) - 1.0) +
         2.0 * std::exp(-0.5 * delta * delta) / delta;
}

}  // namespace

BaseDensity::BaseDensity(BaseKind kind, double p0, double p1, double p2)
    : kind_(kind), p0_(p0), p1_(p1), p2_(p2) {
  switch (kind_) {
    case BaseKind::Gaussian:
      log_norm_ = kLogSqrt2Pi;
      break;
    case BaseKind::Laplace:
      log_norm_ = std::log(2.0);
      break;
    case BaseKind::Gumbel:
      log_norm_ = 0.0;
      break;
    case BaseKind::HalfNormal:
      log_norm_ = kLogSqrtPiOver2;
      break;
    case BaseKind::MaxwellBoltzmann:
      log_norm_ = kLogSqrtPiOver2;
      break;
    case BaseKind::DoubleRayleigh:
      log_norm_ = std::log(2.0);
      break;
    case BaseKind::GDG: {
      if (!(p0_ > 0.0 && p1_ > 0.0 && p2_ > 0.0))
        throw std::invalid_argument("BaseDensity: GDG needs gamma,d,p > 0");
      // C = 2 gamma^d Gamma(d/p) / p
      log_norm_ = std::log(2.0) + p1_ * std::log(p0_) +
                  std::lgamma(p1_ / p2_) - std::log(p2_);
      break;
    }
    case BaseKind::Exponential:
      log_norm_ = 0.0;
      break;
    case BaseKind::HuberPseudo:
      if (!(p0_ > 0.0))
        throw std::invalid_argument("BaseDensity: Huber delta must be > 0");
      log_norm_ = std::log(huber_mass(p0_));
      break;
  }
}

BaseDensity BaseDensity::gaussian() { return {BaseKind::Gaussian, 0, 0, 0}; }
BaseDensity BaseDensity::laplace() { return {BaseKind::Laplace, 0, 0, 0}; }
BaseDensity BaseDensity::gumbel() { return {BaseKind::Gumbel, 0, 0, 0}; }
BaseDensity BaseDensity::half_normal() {
  return {BaseKind::HalfNormal, 0, 0, 0};
}
BaseDensity BaseDensity::maxwell_boltzmann() {
  return {BaseKind::MaxwellBoltzmann, 0, 0, 0};
}
BaseDensity BaseDensity::double_rayleigh() {
  return {BaseKind::DoubleRayleigh, 0, 0, 0};
}
BaseDensity BaseDensity::gdg(double gamma, double d, double p) {
  return {BaseKind::GDG, gamma, d, p};
}
BaseDensity BaseDensity::exponential() {
  return {BaseKind::Exponential, 0, 0, 0};
}
BaseDensity BaseDensity::huber_pseudo(double delta) {
  return {BaseKind::HuberPseudo, delta, 0, 0};
}

double BaseDensity::support_lower() const {
  switch (kind_) {
    case BaseKind::HalfNormal:
    case BaseKind::MaxwellBoltzmann:
    case BaseKind::Exponential:
      return 0.0;
    default:
      return -kInf;
  }
}

double BaseDensity::support_upper() const { return kInf; }

double BaseDensity::loss(double y) const {
  switch (kind_) {
    case BaseKind::Gaussian:
      return 0.5 * y * y + log_norm_;
    case BaseKind::Laplace:
      return std::fabs(y) + log_norm_;
    case BaseKind::Gumbel:
      return y + std::exp(-y);
    case BaseKind::HalfNormal:
      return y < 0.0 ? kInf : 0.5 * y * y + log_norm_;
    case BaseKind::MaxwellBoltzmann:
      return y <= 0.0 ? kInf : 0.5 * y * y - 2.0 * std::log(y) + log_norm_;
    case BaseKind::DoubleRayleigh:
      return y == 0.0 ? kInf
                      : 0.5 * y * y - std::log(std::fabs(y)) + log_norm_;
    case BaseKind::GDG: {
      double a = std::fabs(y);
      if (a == 0.0 && p1_ != 1.0) return p1_ > 1.0 ? kInf : -kInf;
      double t = std::pow(a / p0_, p2_);
      return t - (p1_ - 1.0) * (a == 0.0 ? 0.0 : std::log(a)) + log_norm_;
    }
    case BaseKind::Exponential:
      return y < 0.0 ? kInf : y;
    case BaseKind::HuberPseudo:
      return huber_rho(y, p0_) + log_norm_;
  }
  return kInf;
}

double BaseDensity::dloss(double y) const {
  switch (kind_) {
    case BaseKind::Gaussian:
      return y;
    case BaseKind::Laplace:
      return y > 0.0 ? 1.0 : (y < 0.0 ? -1.0 : 0.0);
    case BaseKind::Gumbel:
      return 1.0 - std::exp(-y);
    case BaseKind::HalfNormal:
      return y;
    case BaseKind::MaxwellBoltzmann:
      return y - 2.0 / y;
    case BaseKind::DoubleRayleigh:
      return y - 1.0 / y;
    case BaseKind::GDG: {
      double a = std::fabs(y);
      double s = y > 0.0 ? 1.0 : (y < 0.0 ? -1.0 : 0.0);
      if (a == 0.0) return 0.0;
      return s * (p2_ * std::pow(a, p2_ - 1.0) / std::pow(p0_, p2_) -
                  (p1_ - 1.0) / a);
    }
    case BaseKind::Exponential:
      return 1.0;
    case BaseKind::HuberPseudo:
      return std::clamp(y, -p0_, p0_);
  }
  return 0.0;
}

double BaseDensity::pdf(double y) const {
  double l = loss(y);
  return std::isfinite(l) ? std::exp(-l) : (l > 0.0 ? 0.0 : kInf);
}

double BaseDensity::cdf(double y) const {
  switch (kind_) {
    case BaseKind::Gaussian:
      return normal_cdf(y);
    case BaseKind::Laplace:
      return y < 0.0 ? 0.5 * std::exp(y) : 1.0 - 0.5 * std::exp(-y);
    case BaseKind::Gumbel:
      return std::exp(-std::exp(-y));
    case BaseKind::HalfNormal:
      return y <= 0.0 ? 0.0 : 2.0 * normal_cdf(y) - 1.0;
    case BaseKind::MaxwellBoltzmann:
      return y <= 0.0 ? 0.0 : gamma_p(1.5, 0.5 * y * y);
    case BaseKind::DoubleRayleigh:
      return y < 0.0 ? 0.5 * std::exp(-0.5 * y * y)
                     : 1.0 - 0.5 * std::exp(-0.5 * y * y);
    case BaseKind::GDG: {
      double t = gamma_p(p1_ / p2_, std::pow(std::fabs(y) / p0_, p2_));
      return y < 0.0 ? 0.5 * (1.0 - t) : 0.5 * (1.0 + t);
    }
    case BaseKind::Exponential:
      return y <= 0.0 ? 0.0 : -std::expm1(-y);
    case BaseKind::HuberPseudo: {
      const double d = p0_;
      const double z = std::exp(log_norm_);
      const double tail = std::exp(-0.5 * d * d) / d;
      if (y <= -d) return std::exp(d * y + 0.5 * d * d) / (d * z);
      if (y >= d) return 1.0 - std::exp(-d * y + 0.5 * d * d) / (d * z);
      return (tail + kSqrt2Pi * (normal_cdf(y) - normal_cdf(-d))) / z;
    }
  }
  return 0.0;
}

double BaseDensity::quantile(double u) const {
  if (u < 0.0 || u > 1.0)
    throw std::domain_error("BaseDensity::quantile: u outside [0,1]");
  if (u == 0.0) return support_lower();
  if (u == 1.0) return support_upper();
  switch (kind_) {
    case BaseKind::Gaussian:
      return normal_quantile(u);
    case BaseKind::Laplace:
      return u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
    case BaseKind::Gumbel:
      return -std::log(-std::log(u));
    case BaseKind::HalfNormal:
      return normal_quantile(0.5 * (1.0 + u));
    case BaseKind::MaxwellBoltzmann:
      return std::sqrt(2.0 * gamma_p_inv(1.5, u));
    case BaseKind::DoubleRayleigh:
      return u < 0.5 ? -std::sqrt(-2.0 * std::log(2.0 * u))
                     : std::sqrt(-2.0 * std::log(2.0 * (1.0 - u)));
    case BaseKind::GDG: {
      double a = p1_ / p2_;
      if (u >= 0.5)
        return p0_ * std::pow(gamma_p_inv(a, 2.0 * u - 1.0), 1.0 / p2_);
      return -p0_ * std::pow(gamma_p_inv(a, 1.0 - 2.0 * u), 1.0 / p2_);
    }
    case BaseKind::Exponential:
      return -std::log1p(-u);
    case BaseKind::HuberPseudo: {
      const double d = p0_;
      const double z = std::exp(log_norm_);
      const double tail = std::exp(-0.5 * d * d) / d;
      if (u * z <= tail) return (std::log(u * z * d) - 0.5 * d * d) / d;
      if ((1.0 - u) * z <= tail)
        return -(std::log((1.0 - u) * z * d) - 0.5 * d * d) / d;
      return normal_quantile(normal_cdf(-d) + (u * z - tail) / kSqrt2Pi);
    }
  }
  return 0.0;
}

std::string BaseDensity::name() const {
  std::ostringstream os;
  switch (kind_) {
    case BaseKind::Gaussian:
      return "gaussian";
    case BaseKind::Laplace:
      return "laplace";
    case BaseKind::Gumbel:
      return "gumbel";
    case BaseKind::HalfNormal:
      return "half-normal";
    case BaseKind::MaxwellBoltzmann:
      return "maxwell-boltzmann";
    case BaseKind::DoubleRayleigh:
      return "double-rayleigh";
    case BaseKind::GDG:
      os << "gdg(" << p0_ << "," << p1_ << "," << p2_ << ")";
      return os.str();
    case BaseKind::Exponential:
      return "exponential";
    case BaseKind::HuberPseudo:
      os << "huber(" << p0_ << ")";
      return os.str();
  }
  return "?";
}

BaseDensity BaseDensity::parse(const std::string& name) {
  std::string key;
  std::string args;
  bool in_args = false;
  for (char c : name) {
    if (c == '(') {
      in_args = true;
      continue;
    }
    if (c == ')') break;
    if (in_args) {
      args.push_back(c);
    } else if (c != '-' && c != '_' && !std::isspace(static_cast<unsigned char>(c))) {
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  std::vector<double> ps;
  std::stringstream ss(args);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) ps.push_back(std::stod(tok));
  }
  if (key == "gaussian" || key == "normal") return gaussian();
  if (key == "laplace") return laplace();
  if (key == "gumbel") return gumbel();
  if (key == "halfnormal") return half_normal();
  if (key == "maxwell" || key == "maxwellboltzmann") return maxwell_boltzmann();
  if (key == "doublerayleigh") return double_rayleigh();
  if (key == "gdg") {
    if (ps.empty()) return gdg(1.0, 1.0, 1.0);
    if (ps.size() == 3) return gdg(ps[0], ps[1], ps[2]);
    throw std::invalid_argument("BaseDensity::parse: gdg needs 3 parameters");
  }
  if (key == "exponential") return exponential();
  if (key == "huber" || key == "huberpseudo")
    return ps.empty() ? huber_pseudo() : huber_pseudo(ps[0]);
  throw std::invalid_argument("BaseDensity::parse: unknown base '" + name +
                              "'");
}

SPDistribution::SPDistribution(BaseDensity base, SkewSpec skew)
    : base_(std::move(base)), skew_(skew) {
  if (!(skew_.sigma > 0.0) || !(skew_.nu > 0.0) || !std::isfinite(skew_.m) ||
      !std::isfinite(skew_.sigma) || !std::isfinite(skew_.nu))
    throw std::invalid_argument(
        "SPDistribution: need sigma, nu > 0 and finite m");
  q_ = base_.cdf(skew_.m);
  z_ = skew_.sigma * q_ + skew_.nu * (1.0 - q_);
}

double SPDistribution::pdf(double y) const {
  const double m = skew_.m;
  double s = y <= m ? skew_.sigma : skew_.nu;
  return base_.pdf((y - m) / s + m) / z_;
}

double SPDistribution::cdf(double y) const {
  const double m = skew_.m;
  if (y <= m) return skew_.sigma * base_.cdf((y - m) / skew_.sigma + m) / z_;
  return (skew_.nu * base_.cdf((y - m) / skew_.nu + m) +
          (skew_.sigma - skew_.nu) * q_) /
         z_;
}

double SPDistribution::quantile(double u) const {
  if (u < 0.0 || u > 1.0)
    throw std::domain_error("SPDistribution::quantile: u outside [0,1]");
  const double m = skew_.m;
  if (u <= left_mass() && q_ > 0.0) {
    double ub = std::clamp(u * z_ / skew_.sigma, 0.0, q_);
    return m + skew_.sigma * (base_.quantile(ub) - m);
  }
  double ua = std::clamp((u * z_ - (skew_.sigma - skew_.nu) * q_) / skew_.nu,
                         q_, 1.0);
  return m + skew_.nu * (base_.quantile(ua) - m);
}

double SPDistribution::support_lower() const {
  const double lo = base_.support_lower();
  if (!std::isfinite(lo)) return lo;
  const double m = skew_.m;
  // With base mass on both sides of m the edge maps through the left scale;
  // with the pivot at or below the edge only the right branch is populated.
  return q_ > 0.0 ? m + skew_.sigma * (lo - m) : m + skew_.nu * (lo - m);
}

double SPDistribution::sample(CounterRng& rng) const {
  // Fixed consumption order: side coin first, then the conditional uniform.
  double u_side = rng.uniform();
  double u_cond = rng.uniform();
  const double m = skew_.m;
  if (u_side < left_mass()) {
    double y0 = base_.quantile(u_cond * q_);
    return m + skew_.sigma * (y0 - m);
  }
  double y0 = base_.quantile(q_ + u_cond * (1.0 - q_));
  return m + skew_.nu * (y0 - m);
}

Eigen::VectorXd SPDistribution::sample(int n, CounterRng& rng) const {
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out[i] = sample(rng);
  return out;
}

PastedDistribution::PastedDistribution(BaseDensity left, BaseDensity right,
                                       SkewSpec skew)
    : left_(std::move(left)), right_(std::move(right)), skew_(skew) {
  if (!(skew_.sigma > 0.0) || !(skew_.nu > 0.0) || !std::isfinite(skew_.m))
    throw std::invalid_argument(
        "PastedDistribution: need sigma, nu > 0 and finite m");
  const double m = skew_.m;
  c_ = right_.pdf(m) * left_.cdf(m) * skew_.sigma +
       left_.pdf(m) * (1.0 - right_.cdf(m)) * skew_.nu;
  if (!(c_ > 0.0))
    throw std::invalid_argument(
        "PastedDistribution: pivot carries no mass on either side");
}

double PastedDistribution::pdf(double y) const {
  const double m = skew_.m;
  if (y <= m)
    return right_.pdf(m) * left_.pdf((y - m) / skew_.sigma + m) / c_;
  return left_.pdf(m) * right_.pdf((y - m) / skew_.nu + m) / c_;
}

double base_cdf_numeric(const BaseDensity& base, double y) {
  auto f = [&](double t) { return base.pdf(t); };
  double lo, hi;
  double center = std::isfinite(base.support_lower())
                      ? base.support_lower() + 1.0
                      : 0.0;
  truncation_bounds(f, center, &lo, &hi, base.support_lower(),
                    base.support_upper());
  double peak = std::max({f(center), f(center - 0.5), f(center + 0.5)});
  if ((std::fabs(lo - center) > 1e8 && f(lo) > 1e-12 * peak) ||
      (std::fabs(hi - center) > 1e8 && f(hi) > 1e-12 * peak))
    throw std::runtime_error("base_cdf_numeric: integrand does not decay");
  // Split at the support edge and at 0, where several bases jump or kink.
  auto pieces = [&](double from, double to) {
    std::vector<double> pts{from};
    if (0.0 > from && 0.0 < to) pts.push_back(0.0);
    pts.push_back(to);
    return pts;
  };
  lo = std::max(lo, base.support_lower());
  double total = integrate_segmented(f, pieces(lo, hi)).value;
  if (y <= lo) return 0.0;
  if (y >= hi) return 1.0;
  return integrate_segmented(f, pieces(lo, y)).value / total;
}

Eigen::VectorXd sp_pdf(const SPDistribution& d, const Eigen::VectorXd& y) {
  return y.unaryExpr([&](double v) { return d.pdf(v); });
}

Eigen::VectorXd sp_cdf(const SPDistribution& d, const Eigen::VectorXd& y) {
  return y.unaryExpr([&](double v) { return d.cdf(v); });
}

Eigen::VectorXd sp_quantile(const SPDistribution& d, const Eigen::VectorXd& u) {
  return u.unaryExpr([&](double v) { return d.quantile(v); });
}

}  // namespace pivotblend
