#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "pivotblend/densities.hpp"
#include "pivotblend/quadrature.hpp"
#include "pivotblend/rng.hpp"
#include "pivotblend/special.hpp"

using namespace pivotblend;

namespace {

std::vector<BaseDensity> all_bases() {
  return {BaseDensity::gaussian(),
          BaseDensity::laplace(),
          BaseDensity::gumbel(),
          BaseDensity::half_normal(),
          BaseDensity::maxwell_boltzmann(),
          BaseDensity::double_rayleigh(),
          BaseDensity::gdg(1.0, 1.0, 1.0),
          BaseDensity::gdg(1.0, 2.0, 1.5),
          BaseDensity::exponential(),
          BaseDensity::huber_pseudo(1.345)};
}

// Integrates the blended pdf up to `upto`, splitting at the support edge
// and the pivot so the open quadrature rule never straddles a hidden jump.
double integrate_pdf(const SPDistribution& d, double upto) {
  auto f = [&](double y) { return d.pdf(y); };
  double lo, hi;
  truncation_bounds(f, d.quantile(0.5), &lo, &hi);
  lo = std::max(lo, d.support_lower());
  if (upto < hi) hi = upto;
  if (hi <= lo) return 0.0;
  std::vector<double> pts{lo};
  if (d.skew().m > lo && d.skew().m < hi) pts.push_back(d.skew().m);
  pts.push_back(hi);
  return integrate_segmented(f, pts, 1e-11, 1e-11).value;
}

}  // namespace

TEST_CASE("special functions agree with independent references") {
  // Normal round trip across the bulk and both tails.
  for (double u : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1 - 1e-10}) {
    double x = normal_quantile(u);
    CHECK(normal_cdf(x) == doctest::Approx(u).epsilon(1e-11));
  }
  CHECK(normal_quantile(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-12));

  // gamma_p against quadrature of the gamma density.
  for (double a : {0.5, 1.5, 3.0, 7.5}) {
    for (double x : {0.2, 1.0, 2.5, 9.0}) {
      auto f = [a](double t) {
        return std::exp(-t + (a - 1.0) * std::log(t) - std::lgamma(a));
      };
      double ref = integrate(f, 1e-300, x, 1e-12, 1e-12).value;
      CHECK(gamma_p(a, x) == doctest::Approx(ref).epsilon(1e-9));
      CHECK(gamma_p_inv(a, gamma_p(a, x)) == doctest::Approx(x).epsilon(1e-9));
    }
  }

  CHECK(kolmogorov_q(10.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kolmogorov_q(0.5) > 0.95);
}

TEST_CASE("base densities: frozen reference values") {
  BaseDensity hub = BaseDensity::huber_pseudo(1.345);
  CHECK(hub.cdf(1.0) == doctest::Approx(0.821575801720276).epsilon(1e-10));
  CHECK(hub.cdf(-2.0) == doctest::Approx(0.04686520822938494).epsilon(1e-10));
  CHECK(hub.pdf(0.5) == doctest::Approx(0.3316755010333286).epsilon(1e-10));

  BaseDensity mx = BaseDensity::maxwell_boltzmann();
  CHECK(mx.quantile(0.5) == doctest::Approx(1.5381722544550522).epsilon(1e-10));
  CHECK(mx.cdf(1.3) == doctest::Approx(0.3608406915044802).epsilon(1e-10));
  CHECK(mx.quantile(0.9) == doctest::Approx(2.5002777108094065).epsilon(1e-10));

  BaseDensity gd = BaseDensity::gdg(1.0, 2.0, 1.5);
  CHECK(gd.cdf(0.7) == doctest::Approx(0.6491327939231232).epsilon(1e-10));

  BaseDensity dr = BaseDensity::double_rayleigh();
  CHECK(dr.cdf(-0.5) == doctest::Approx(0.44124845129229767).epsilon(1e-12));

  BaseDensity gu = BaseDensity::gumbel();
  CHECK(gu.cdf(0.3) == doctest::Approx(0.4767236907145941).epsilon(1e-12));
}

TEST_CASE("base densities: normalization, CDF oracle, round trips") {
  for (const auto& b : all_bases()) {
    std::string nm = b.name();
    CAPTURE(nm);
    // Normalization of the pdf by quadrature.
    auto f = [&](double y) { return b.pdf(y); };
    double center = std::isfinite(b.support_lower()) ? 1.0 : 0.5;
    double lo, hi;
    truncation_bounds(f, center, &lo, &hi, b.support_lower());
    lo = std::max(lo, b.support_lower());
    std::vector<double> pts{lo};
    if (0.0 > lo && 0.0 < hi) pts.push_back(0.0);
    pts.push_back(hi);
    CHECK(integrate_segmented(f, pts).value ==
          doctest::Approx(1.0).epsilon(1e-8));

    // Closed-form CDF against the quadrature-backed numeric CDF.
    for (double y : {-2.0, -0.3, 0.4, 1.1, 2.7}) {
      CHECK(b.cdf(y) ==
            doctest::Approx(base_cdf_numeric(b, y)).epsilon(1e-7));
    }

    // quantile(cdf(y)) == y at interior points.
    for (double y : {0.3, 0.9, 1.7, 3.1}) {
      CHECK(b.quantile(b.cdf(y)) == doctest::Approx(y).epsilon(1e-9));
    }
    // cdf(quantile(u)) == u.
    for (double u : {0.05, 0.3, 0.5, 0.8, 0.99}) {
      CHECK(b.cdf(b.quantile(u)) == doctest::Approx(u).epsilon(1e-9));
    }

    // dloss is the derivative of loss where the loss is smooth.
    for (double y : {0.37, 1.21, 2.6}) {
      double h = 1e-6;
      double fd = (b.loss(y + h) - b.loss(y - h)) / (2.0 * h);
      CHECK(b.dloss(y) == doctest::Approx(fd).epsilon(1e-5));
    }

    // exp(-loss) is the pdf.
    for (double y : {0.5, 1.5}) {
      CHECK(std::exp(-b.loss(y)) == doctest::Approx(b.pdf(y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("blend: frozen Gaussian reference values") {
  const double m = 0.6744897501960817;
  SPDistribution d(BaseDensity::gaussian(), {m, 0.3, 0.9});
  CHECK(d.normalizer() == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(d.left_mass() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.pdf(0.2) == doctest::Approx(0.587496599044666).epsilon(1e-10));
  CHECK(d.pdf(1.5) == doctest::Approx(0.24976808139261591).epsilon(1e-10));
  CHECK(d.cdf(0.2) == doctest::Approx(0.12144377115845684).epsilon(1e-12));
  CHECK(d.cdf(m) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.cdf(1.5) == doctest::Approx(0.8885531231250711).epsilon(1e-12));
  CHECK(d.quantile(0.1) == doctest::Approx(0.16121280828912032).epsilon(1e-11));
  CHECK(d.quantile(0.5) == doctest::Approx(m).epsilon(1e-11));
  CHECK(d.quantile(0.9) == doctest::Approx(1.547817239275933).epsilon(1e-11));
}

TEST_CASE("blend: invariants over a parameter grid") {
  const std::vector<double> scale_grid = {0.5, 1.0, 2.0};
  const std::vector<double> k_grid = {0.25, 0.5, 0.75};
  for (const auto& b : all_bases()) {
    for (double k : k_grid) {
      double m = b.quantile(k);
      for (double sig : scale_grid) {
        for (double nu : scale_grid) {
          std::string nm = b.name();
    CAPTURE(nm);
          CAPTURE(m);
          CAPTURE(sig);
          CAPTURE(nu);
          SPDistribution d(b, {m, sig, nu});

          // Total mass.
          CHECK(integrate_pdf(d, 1e308) == doctest::Approx(1.0).epsilon(1e-6));

          // Continuity at the pivot: both branch expressions agree.
          double left_at_m = b.pdf((m - m) / sig + m) / d.normalizer();
          double right_at_m = b.pdf((m - m) / nu + m) / d.normalizer();
          CHECK(std::fabs(left_at_m - right_at_m) < 1e-12);

          // Mass split: F(m) = sigma Phi(m) / Z both in closed form and by
          // integration.
          CHECK(d.cdf(m) == doctest::Approx(d.left_mass()).epsilon(1e-12));
          CHECK(integrate_pdf(d, m) ==
                doctest::Approx(d.left_mass()).epsilon(1e-7));

          // CDF/quantile round trip.
          for (double u : {0.05, 0.3, 0.5, 0.7, 0.95}) {
            double y = d.quantile(u);
            CHECK(d.cdf(y) == doctest::Approx(u).epsilon(1e-9));
          }
        }
      }
    }
  }
}

TEST_CASE("blend: equal scales reduce to a pure scale family") {
  for (const auto& b : all_bases()) {
    double m = b.quantile(0.6);
    double c = 1.7;
    SPDistribution d(b, {m, c, c});
    for (double y : {0.2, 0.9, 2.4}) {
      double ref = b.pdf((y - m) / c + m) / c;
      CHECK(d.pdf(y) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("blend: sampling matches the CDF (KS)") {
  const int n = 20000;
  const double crit5 = 1.358 / std::sqrt(static_cast<double>(n));
  CounterRng rng(20260825);
  int cfg = 0;
  for (const auto& b : all_bases()) {
    SPDistribution d(b, {b.quantile(0.7), 0.5, 1.5});
    CounterRng r = rng.stream(cfg++);
    Eigen::VectorXd s = d.sample(n, r);
    std::vector<double> v(s.data(), s.data() + n);
    std::sort(v.begin(), v.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      double fy = d.cdf(v[i]);
      ks = std::max(ks, std::fabs(fy - (i + 1.0) / n));
      ks = std::max(ks, std::fabs(fy - static_cast<double>(i) / n));
    }
    std::string nm = b.name();
    CAPTURE(nm);
    CHECK(ks < crit5);
  }
}

TEST_CASE("blend: sampling is deterministic per seed and stream") {
  SPDistribution d(BaseDensity::gaussian(), {0.0, 0.4, 1.2});
  CounterRng a(7), b(7), c(8);
  Eigen::VectorXd sa = d.sample(5, a);
  Eigen::VectorXd sb = d.sample(5, b);
  Eigen::VectorXd sc = d.sample(5, c);
  CHECK((sa - sb).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((sa - sc).lpNorm<Eigen::Infinity>() > 0.0);
  CounterRng s1 = a.stream(1), s2 = a.stream(2);
  CHECK((d.sample(3, s1) - d.sample(3, s2)).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("pasting: frozen reference and invariants") {
  PastedDistribution g(BaseDensity::laplace(), BaseDensity::gaussian(),
                       {0.5, 0.8, 1.3});
  CHECK(g.normalizer() == doctest::Approx(0.3178762554409521).epsilon(1e-10));
  CHECK(g.pdf(-1.0) == doctest::Approx(0.14001683578484028).epsilon(1e-10));
  CHECK(g.pdf(2.0) == doctest::Approx(0.09694648455985125).epsilon(1e-10));

  // Normalization by quadrature.
  auto f = [&](double y) { return g.pdf(y); };
  double lo, hi;
  truncation_bounds(f, 0.5, &lo, &hi);
  CHECK(integrate(f, lo, hi).value == doctest::Approx(1.0).epsilon(1e-6));

  // Continuity at the pivot.
  CHECK(g.pdf(0.5) == doctest::Approx(g.pdf(0.5 + 1e-13)).epsilon(1e-9));

  // Same base on both sides collapses to the one-base blend.
  PastedDistribution p2(BaseDensity::gaussian(), BaseDensity::gaussian(),
                        {0.3, 0.6, 1.4});
  SPDistribution sp(BaseDensity::gaussian(), {0.3, 0.6, 1.4});
  for (double y : {-1.0, 0.3, 2.0}) {
    CHECK(p2.pdf(y) == doctest::Approx(sp.pdf(y)).epsilon(1e-12));
  }
}

TEST_CASE("validation and degenerate pivots") {
  CHECK_THROWS_AS(SPDistribution(BaseDensity::gaussian(), {0.0, -1.0, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SPDistribution(BaseDensity::gaussian(), {0.0, 1.0, 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(BaseDensity::gdg(-1.0, 1.0, 1.0), std::invalid_argument);

  // Pivot below a bounded support: the left branch carries no mass and the
  // blend is a one-sided location-scale family.
  SPDistribution d(BaseDensity::exponential(), {-1.0, 0.5, 2.0});
  CHECK(d.pivot_outside_support());
  CHECK(d.left_mass() == 0.0);
  CHECK(integrate_pdf(d, 1e308) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("base parsing round trip") {
  for (const auto& b : all_bases()) {
    BaseDensity p = BaseDensity::parse(b.name());
    CHECK(p.kind() == b.kind());
    CHECK(p.pdf(0.8) == doctest::Approx(b.pdf(0.8)).epsilon(1e-12));
  }
  CHECK(BaseDensity::parse("half-normal").kind() == BaseKind::HalfNormal);
  CHECK(BaseDensity::parse("Maxwell").kind() == BaseKind::MaxwellBoltzmann);
  CHECK_THROWS(BaseDensity::parse("cauchy"));
}
