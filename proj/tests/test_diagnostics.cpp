#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pivotblend/densities.hpp"
#include "pivotblend/diagnostics.hpp"
#include "pivotblend/rng.hpp"
#include "pivotblend/special.hpp"

using namespace pivotblend;

TEST_CASE("backward blend: hand-worked weights and values") {
  Eigen::VectorXd r(4);
  r << -1.0, 0.0, 2.0, 3.0;
  SkewSpec skew{1.0, 2.0, 0.5};
  WeightedSample ws = backward_blend(r, skew);
  CHECK(ws.n_left == 2);
  CHECK(ws.n_right == 2);
  // denom = L nu + R sigma = 2*0.5 + 2*2 = 5
  CHECK(ws.weights[0] == doctest::Approx(0.1));
  CHECK(ws.weights[1] == doctest::Approx(0.1));
  CHECK(ws.weights[2] == doctest::Approx(0.4));
  CHECK(ws.weights[3] == doctest::Approx(0.4));
  CHECK(ws.q_hat == doctest::Approx(0.2));
  CHECK(ws.values[0] == doctest::Approx(0.0));
  CHECK(ws.values[1] == doctest::Approx(0.5));
  CHECK(ws.values[2] == doctest::Approx(3.0));
  CHECK(ws.values[3] == doctest::Approx(5.0));
  CHECK(ws.weights.sum() == doctest::Approx(1.0));

  // One-sided input stays finite.
  Eigen::VectorXd neg(2);
  neg << -3.0, -2.0;
  WeightedSample one = backward_blend(neg, {0.0, 1.0, 1.0});
  CHECK(one.q_hat == doctest::Approx(1.0));
  CHECK(one.weights.sum() == doctest::Approx(1.0));

  CHECK_THROWS_AS(backward_blend(Eigen::VectorXd(), skew),
                  std::invalid_argument);
  CHECK_THROWS_AS(backward_blend(r, SkewSpec{0.0, -1.0, 1.0}),
                  std::invalid_argument);
}

TEST_CASE("weighted ECDF: step values and quantiles") {
  Eigen::VectorXd r(4);
  r << -1.0, 0.0, 2.0, 3.0;
  WeightedSample ws = backward_blend(r, {1.0, 2.0, 0.5});
  WeightedEcdf ecdf(ws);  // points {0, 0.5, 3, 5}, cum {0.1, 0.2, 0.6, 1.0}
  CHECK(ecdf(-0.1) == doctest::Approx(0.0));
  CHECK(ecdf(0.0) == doctest::Approx(0.1));
  CHECK(ecdf(0.4) == doctest::Approx(0.1));
  CHECK(ecdf(0.5) == doctest::Approx(0.2));
  CHECK(ecdf(4.0) == doctest::Approx(0.6));
  CHECK(ecdf(6.0) == doctest::Approx(1.0));
  CHECK(ecdf.quantile(0.15) == doctest::Approx(0.5));
  CHECK(ecdf.quantile(0.6) == doctest::Approx(3.0));
  CHECK(ecdf.quantile(0.61) == doctest::Approx(5.0));
}

TEST_CASE("weighted KS equals the classic statistic for equal weights") {
  CounterRng rng(101);
  const int n = 500;
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = rng.uniform();
  WeightedSample ws;
  ws.values = u;
  ws.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  ws.n_left = n;
  auto ident = [](double x) { return std::min(1.0, std::max(0.0, x)); };
  KsResult ks = weighted_ks(ws, ident);

  std::sort(u.data(), u.data() + n);
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    d = std::max(d, std::fabs((i + 1.0) / n - u[i]));
    d = std::max(d, std::fabs(u[i] - static_cast<double>(i) / n));
  }
  CHECK(ks.statistic == doctest::Approx(d).epsilon(1e-12));
  CHECK(ks.n_eff == doctest::Approx(static_cast<double>(n)));
  CHECK(ks.p_value == doctest::Approx(kolmogorov_q(std::sqrt(ks.n_eff) * d)));
  CHECK(ks.p_value > 0.05);  // correct null for this seed
}

TEST_CASE("kde: closed form for a two-point sample and unit mass") {
  WeightedSample ws;
  ws.values.resize(2);
  ws.values << -1.0, 2.0;
  ws.weights.resize(2);
  ws.weights << 0.25, 0.75;
  Eigen::VectorXd grid(3);
  grid << -1.0, 0.5, 2.0;
  KdeResult kde = weighted_kde(ws, grid, 0.8);
  for (int g = 0; g < 3; ++g) {
    double expect = 0.25 * normal_pdf((grid[g] + 1.0) / 0.8) / 0.8 +
                    0.75 * normal_pdf((grid[g] - 2.0) / 0.8) / 0.8;
    CHECK(kde.density[g] == doctest::Approx(expect).epsilon(1e-12));
  }

  // Mass check on a wide grid (trapezoid).
  Eigen::VectorXd wide(2001);
  wide.setLinSpaced(2001, -12.0, 12.0);
  KdeResult k2 = weighted_kde(ws, wide, 0.8);
  double mass = 0.0;
  for (int g = 0; g + 1 < wide.size(); ++g)
    mass += 0.5 * (k2.density[g] + k2.density[g + 1]) *
            (wide[g + 1] - wide[g]);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("backward blend of a correctly specified sample recovers the base") {
  // Large-sample oracle: blend draws mapped back with the true parameters
  // must match the standard normal to ECDF accuracy 0.01 and KDE accuracy
  // 0.03 on [-3, 3].
  SkewSpec truth{0.6744897501960817, 0.3, 0.9};
  SPDistribution d(BaseDensity::gaussian(), truth);
  CounterRng rng(20260825);
  Eigen::VectorXd r = d.sample(100000, rng);
  WeightedSample ws = backward_blend(r, truth);

  CHECK(std::fabs(ws.q_hat - 0.75) < 0.01);

  WeightedEcdf ecdf(ws);
  double sup_ecdf = 0.0;
  for (double x = -3.0; x <= 3.0; x += 0.01)
    sup_ecdf = std::max(sup_ecdf, std::fabs(ecdf(x) - normal_cdf(x)));
  CHECK(sup_ecdf < 0.01);

  Eigen::VectorXd grid(512);
  grid.setLinSpaced(512, -3.0, 3.0);
  KdeResult kde = weighted_kde(ws, grid);
  double sup_kde = 0.0;
  for (int g = 0; g < 512; ++g)
    sup_kde = std::max(sup_kde, std::fabs(kde.density[g] - normal_pdf(grid[g])));
  CHECK(sup_kde < 0.03);

  KsResult ks = weighted_ks(ws, normal_cdf);
  CHECK(ks.statistic < 0.01);
  CHECK(ks.p_value > 0.05);
}

TEST_CASE("misspecified parameters are detected") {
  SkewSpec truth{0.6744897501960817, 0.3, 0.9};
  SPDistribution d(BaseDensity::gaussian(), truth);
  CounterRng rng(7);
  Eigen::VectorXd r = d.sample(5000, rng);
  // Diagnose as if the fit had found a symmetric scale.
  WeightedSample wrong = backward_blend(r, {0.6744897501960817, 0.55, 0.55});
  KsResult ks = weighted_ks(wrong, normal_cdf);
  CHECK(ks.p_value < 1e-4);
}

TEST_CASE("diagnose: report invariants and verdicts") {
  SkewSpec truth{0.2, 0.5, 1.1};
  SPDistribution d(BaseDensity::laplace(), truth);
  CounterRng rng(42);
  Eigen::VectorXd r = d.sample(4000, rng);

  DiagnosticsReport rep = diagnose(r, truth, BaseDensity::laplace());
  CHECK(rep.adequate);
  CHECK(rep.ks.p_value > 0.05);
  CHECK(rep.bin_edges.size() == 51);
  CHECK(rep.bin_density.size() == 50);
  CHECK(rep.kde_grid.size() == 512);
  CHECK(rep.kde_density.size() == 512);
  CHECK(rep.base_density.size() == 512);
  CHECK(rep.bandwidth > 0.0);
  // Histogram covers every mapped point, so it integrates to one.
  double width = rep.bin_edges[1] - rep.bin_edges[0];
  CHECK(rep.bin_density.sum() * width == doctest::Approx(1.0).epsilon(1e-9));
  for (int g = 0; g < 512; ++g) {
    CHECK(rep.base_density[g] ==
          doctest::Approx(BaseDensity::laplace().pdf(rep.kde_grid[g])));
  }

  DiagnosticsReport bad =
      diagnose(r, {0.2, 0.8, 0.8}, BaseDensity::laplace());
  CHECK_FALSE(bad.adequate);

  // Bounded base: the chart window must respect the support edge.
  SkewSpec hskew{0.7978845608028654, 0.3, 0.1};
  SPDistribution hn(BaseDensity::half_normal(), hskew);
  CounterRng hrng = rng.stream(1);
  Eigen::VectorXd hr = hn.sample(2000, hrng);
  DiagnosticsReport hrep = diagnose(hr, hskew, BaseDensity::half_normal());
  CHECK(hrep.bin_edges[0] >= 0.0);
  CHECK(hrep.adequate);

  CHECK_THROWS_AS(diagnose(r, truth, BaseDensity::laplace(), 0),
                  std::invalid_argument);
}
