#include "pivotblend/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pivotblend/rng.hpp"

namespace pivotblend {

namespace {

int thread_budget(int tasks) {
  int budget = 0;
  if (const char* env = std::getenv("PIVOTBLEND_THREADS")) {
    budget = std::atoi(env);
    if (budget < 1) budget = 1;
  } else {
    budget = static_cast<int>(std::thread::hardware_concurrency());
    if (budget < 1) budget = 1;
  }
  return std::min(budget, std::max(1, tasks));
}

// Runs fn(t) for t in [0, tasks); each task writes only its own slot, so
// the result is independent of scheduling.
template <typename Fn>
void parallel_for(int tasks, Fn&& fn) {
  const int workers = thread_budget(tasks);
  if (workers <= 1) {
    for (int t = 0; t < tasks; ++t) fn(t);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int t = next.fetch_add(1); t < tasks; t = next.fetch_add(1)) fn(t);
    });
  for (auto& th : pool) th.join();
}

Eigen::MatrixXd draw_design(int n, int p, double kappa, CounterRng rng) {
  Eigen::MatrixXd z(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) z(i, j) = rng.normal();
  if (kappa == 0.0) return z;
  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(kappa, std::abs(i - j));
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gen_design: Toeplitz factorization failed");
  return z * llt.matrixL().transpose();
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

Eigen::MatrixXd gen_design(int n, int p, double kappa, std::uint64_t seed) {
  if (n < 1 || p < 1)
    throw std::invalid_argument("gen_design: need n >= 1 and p >= 1");
  if (!(kappa >= 0.0) || kappa >= 1.0)
    throw std::invalid_argument("gen_design: kappa must lie in [0, 1)");
  return draw_design(n, p, kappa, CounterRng(seed));
}

double half_normal_mean() { return 0.7978845608028654; }
double maxwell_median() { return 1.5381722544550522; }
double double_rayleigh_rmode() { return 1.0; }

std::vector<std::string> preset_names() {
  return {"ex1-gauss", "ex1-laplace", "ex2-gauss", "ex2-laplace",
          "ex3",       "ex4",         "ex5"};
}

ExperimentSpec preset(const std::string& name, double ratio) {
  ExperimentSpec spec;
  spec.design.p = 3;
  spec.truth.beta_star.resize(3);
  spec.truth.beta_star << 12.0, 13.0, 14.0;
  spec.truth.alpha_star = 0.0;
  spec.replications = 50;

  auto pick = [&](std::initializer_list<double> ratios,
                  std::initializer_list<double> values) {
    auto r = ratios.begin();
    auto v = values.begin();
    for (; r != ratios.end(); ++r, ++v)
      if (std::fabs(ratio - *r) < 0.05) return *v;
    std::ostringstream os;
    os << "preset " << name << ": ratio " << ratio
       << " not offered; choose one of {";
    for (double rr : ratios) os << " " << rr;
    os << " }";
    throw std::invalid_argument(os.str());
  };

  if (name == "ex1-gauss" || name == "ex1-laplace") {
    spec.design.n = 300;
    spec.design.kappa = 0.5;
    spec.truth.base = name == "ex1-gauss" ? BaseDensity::gaussian()
                                          : BaseDensity::laplace();
    spec.truth.skew_star.m = 0.0;
    spec.truth.skew_star.sigma = 0.2;
    spec.truth.skew_star.nu = pick({2.0, 3.0, 6.0}, {0.4, 0.6, 1.2});
  } else if (name == "ex2-gauss" || name == "ex2-laplace") {
    spec.design.n = 300;
    spec.design.kappa = 0.2;
    spec.truth.base = name == "ex2-gauss" ? BaseDensity::gaussian()
                                          : BaseDensity::laplace();
    spec.truth.skew_star.m = 0.6744897501960817;  // third quartile of Phi
    spec.truth.skew_star.sigma = 0.3;
    spec.truth.skew_star.nu =
        pick({5.0 / 3.0, 7.0 / 3.0, 3.0}, {0.5, 0.7, 0.9});
  } else if (name == "ex3") {
    spec.design.n = 700;
    spec.design.kappa = 0.1;
    spec.truth.base = BaseDensity::half_normal();
    spec.truth.skew_star.m = half_normal_mean();
    spec.truth.skew_star.nu = 0.1;
    spec.truth.skew_star.sigma = pick({2.0, 3.0, 4.0}, {0.2, 0.3, 0.4});
  } else if (name == "ex4") {
    spec.design.n = 500;
    spec.design.kappa = 0.2;
    spec.truth.base = BaseDensity::maxwell_boltzmann();
    spec.truth.skew_star.m = maxwell_median();
    spec.truth.skew_star.nu = 0.1;
    spec.truth.skew_star.sigma = pick({4.0, 5.0, 6.0}, {0.4, 0.5, 0.6});
  } else if (name == "ex5") {
    spec.design.n = 500;
    spec.design.kappa = 0.1;
    spec.truth.base = BaseDensity::double_rayleigh();
    spec.truth.skew_star.m = double_rayleigh_rmode();
    spec.truth.skew_star.nu = 0.1;
    spec.truth.skew_star.sigma = pick({2.0, 3.0, 4.0}, {0.2, 0.3, 0.4});
  } else {
    std::ostringstream os;
    os << "unknown preset '" << name << "'; choose one of {";
    for (const auto& nm : preset_names()) os << " " << nm;
    os << " }";
    throw std::invalid_argument(os.str());
  }
  return spec;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  const int n = spec.design.n;
  const int p = spec.design.p;
  if (spec.replications < 1)
    throw std::invalid_argument("run_experiment: need replications >= 1");
  if (spec.truth.beta_star.size() != p)
    throw std::invalid_argument(
        "run_experiment: beta_star length must equal p");
  if (!(spec.design.kappa >= 0.0) || spec.design.kappa >= 1.0)
    throw std::invalid_argument("run_experiment: kappa must lie in [0, 1)");

  ExperimentResult out;
  out.rows.resize(spec.replications);

  parallel_for(spec.replications, [&](int t) {
    ReplicationRow& row = out.rows[t];
    row.rep = t;
    CounterRng master(spec.design.seed);
    Eigen::MatrixXd x = draw_design(
        n, p, spec.design.kappa,
        master.stream(2 * static_cast<std::uint64_t>(t) + 1));
    Eigen::VectorXd y = x * spec.truth.beta_star;
    y.array() += spec.truth.alpha_star;
    if (!spec.truth.noiseless) {
      SPDistribution noise(spec.truth.base, spec.truth.skew_star);
      CounterRng nrng = master.stream(2 * static_cast<std::uint64_t>(t) + 2);
      y += noise.sample(n, nrng);
    }

    SpeusProblem prob;
    prob.x = std::move(x);
    prob.y = std::move(y);
    prob.base = spec.truth.base;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      SPFit fit = speus_fit(prob, spec.method_opts);
      row.ok = true;
      row.beta = fit.beta;
      row.alpha = fit.alpha;
      row.skew = fit.skew;
    } catch (const OptimizationFailure& e) {
      row.ok = false;
      row.note = e.what();
    }
    row.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  });

  double sq_beta = 0.0, sq_sigma = 0.0, sq_nu = 0.0, sq_m = 0.0, secs = 0.0;
  for (const ReplicationRow& row : out.rows) {
    if (!row.ok) {
      ++out.metrics.failures;
      continue;
    }
    ++out.metrics.used;
    sq_beta += (row.beta - spec.truth.beta_star).squaredNorm();
    sq_sigma += std::pow(row.skew.sigma / spec.truth.skew_star.sigma - 1.0, 2);
    sq_nu += std::pow(row.skew.nu / spec.truth.skew_star.nu - 1.0, 2);
    sq_m += std::pow(row.skew.m - spec.truth.skew_star.m, 2);
    secs += row.seconds;
  }
  if (out.metrics.used > 0) {
    const double used = out.metrics.used;
    out.metrics.err_beta = std::sqrt(sq_beta / (used * p));
    out.metrics.err_sigma = std::sqrt(sq_sigma / used);
    out.metrics.err_nu = std::sqrt(sq_nu / used);
    out.metrics.err_m = std::sqrt(sq_m / used);
    out.metrics.mean_runtime = secs / used;
  }
  return out;
}

BootstrapResult bootstrap(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const BaseDensity& base, int b_draws, double level,
                          std::uint64_t seed, const FitOptions& opts) {
  if (b_draws < 1) throw std::invalid_argument("bootstrap: need B >= 1");
  if (!(level > 0.0) || !(level < 1.0))
    throw std::invalid_argument("bootstrap: level must lie in (0, 1)");
  const int n = static_cast<int>(y.size());
  const int p = static_cast<int>(x.cols());

  SpeusProblem full;
  full.x = x;
  full.y = y;
  full.base = base;
  BootstrapResult out;
  out.full_fit = speus_fit(full, opts);
  SpeusParams warm;
  warm.beta = out.full_fit.beta;
  warm.alpha = out.full_fit.alpha;
  warm.skew = out.full_fit.skew;

  out.draws.resize(b_draws, p + 4);
  std::vector<char> ok(b_draws, 0);
  parallel_for(b_draws, [&](int t) {
    CounterRng master(seed);
    CounterRng rng = master.stream(2 * static_cast<std::uint64_t>(t) + 1);
    SpeusProblem res;
    res.x.resize(n, p);
    res.y.resize(n);
    for (int i = 0; i < n; ++i) {
      const int r = static_cast<int>(rng.uniform_index(n));
      res.x.row(i) = x.row(r);
      res.y[i] = y[r];
    }
    res.base = base;
    try {
      SPFit fit = speus_fit_warm(res, opts, warm);
      out.draws.row(t).head(p) = fit.beta;
      out.draws(t, p) = fit.alpha;
      out.draws(t, p + 1) = fit.skew.sigma;
      out.draws(t, p + 2) = fit.skew.nu;
      out.draws(t, p + 3) = fit.skew.m;
      ok[t] = 1;
    } catch (const OptimizationFailure&) {
      out.draws.row(t).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  });

  std::vector<int> kept;
  for (int t = 0; t < b_draws; ++t)
    (ok[t] ? kept.push_back(t) : (void)++out.failures);
  if (kept.empty()) {
    out.reliable = false;
    out.warnings.push_back("every bootstrap refit failed");
    return out;
  }
  if (out.failures > b_draws / 5) {
    out.reliable = false;
    out.warnings.push_back("more than 20% of bootstrap refits failed");
  }

  const double lo = (1.0 - level) / 2.0;
  const double hi = 1.0 - lo;
  auto interval = [&](int col) {
    std::vector<double> v;
    v.reserve(kept.size());
    for (int t : kept) v.push_back(out.draws(t, col));
    return std::array<double, 2>{percentile(v, lo), percentile(v, hi)};
  };
  out.ci_beta.resize(p, 2);
  for (int k = 0; k < p; ++k) {
    auto ci = interval(k);
    out.ci_beta(k, 0) = ci[0];
    out.ci_beta(k, 1) = ci[1];
  }
  auto cs = interval(p + 1);
  auto cn = interval(p + 2);
  auto cm = interval(p + 3);
  out.ci_sigma = cs;
  out.ci_nu = cn;
  out.ci_m = cm;
  if (cs[0] == cs[1] || cn[0] == cn[1] || cm[0] == cm[1]) {
    out.reliable = false;
    out.warnings.push_back(
        "zero-width percentile interval: too few distinct draws");
  }
  return out;
}

SelectionFrequencies selection_frequencies(const TwoPartProblem& problem,
                                           int b_draws, std::uint64_t seed,
                                           int folds, int n_lambda,
                                           const S2Options& opts) {
  if (b_draws < 1)
    throw std::invalid_argument("selection_frequencies: need B >= 1");
  const int n = static_cast<int>(problem.y.size());
  const int p = static_cast<int>(problem.x.cols());

  SelectionFrequencies out;
  out.frequency = Eigen::VectorXd::Zero(p);
  std::vector<std::vector<int>> supports(b_draws);
  std::vector<char> ok(b_draws, 0);

  parallel_for(b_draws, [&](int t) {
    CounterRng master(seed);
    CounterRng rng = master.stream(2 * static_cast<std::uint64_t>(t) + 1);
    TwoPartProblem res = problem;
    res.x.resize(n, p);
    res.y.resize(n);
    for (int i = 0; i < n; ++i) {
      const int r = static_cast<int>(rng.uniform_index(n));
      res.x.row(i) = problem.x.row(r);
      res.y[i] = problem.y[r];
    }
    try {
      ScvResult scv = select_lambda_scv(
          res, folds, n_lambda, master.stream(2 * t + 2).next_u64(), opts);
      supports[t] = scv.fit.support;
      ok[t] = 1;
    } catch (const std::exception&) {
      // draws without both classes, fold starvation, or optimizer failure
    }
  });

  for (int t = 0; t < b_draws; ++t) {
    if (!ok[t]) {
      ++out.failures;
      continue;
    }
    ++out.draws_used;
    for (int k : supports[t]) out.frequency[k] += 1.0;
  }
  if (out.draws_used > 0) out.frequency /= static_cast<double>(out.draws_used);
  if (out.failures > b_draws / 5)
    out.warnings.push_back("more than 20% of bootstrap draws failed");
  return out;
}

}  // namespace pivotblend
