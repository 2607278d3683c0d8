#include "pivotblend/speus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "pivotblend/special.hpp"

namespace pivotblend {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double empirical_quantile(std::vector<double> v, double k) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  double h = (static_cast<double>(v.size()) - 1.0) * k;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

double sample_sd(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() /
                   static_cast<double>(v.size() - 1));
}

struct Layout {
  int p = 0;
  bool intercept = true;
  bool equal_scales = false;
  bool fix_m = false;
  int i_alpha = -1, i_s = -1, i_t = -1, i_m = -1;
  int size = 0;

  Layout(const SpeusProblem& problem, const FitOptions& opts) {
    p = static_cast<int>(problem.x.cols());
    intercept = problem.include_intercept;
    equal_scales = opts.equal_scales;
    fix_m = opts.fix_m;
    int idx = p;
    if (intercept) i_alpha = idx++;
    i_s = idx++;
    if (!equal_scales) i_t = idx++;
    if (!fix_m) i_m = idx++;
    size = idx;
  }
};

double resolved_tau(double tau, int n) {
  return tau < 0.0 ? 1e-4 * static_cast<double>(n) : tau;
}

}  // namespace

int packed_size(const SpeusProblem& problem, const FitOptions& opts) {
  return Layout(problem, opts).size;
}

Eigen::VectorXd pack_params(const SpeusProblem& problem, const FitOptions& opts,
                            const SpeusParams& params) {
  Layout lay(problem, opts);
  Eigen::VectorXd z(lay.size);
  z.head(lay.p) = params.beta;
  if (lay.intercept) z[lay.i_alpha] = params.alpha;
  z[lay.i_s] = std::log(params.skew.sigma);
  if (!lay.equal_scales) z[lay.i_t] = std::log(params.skew.nu);
  if (!lay.fix_m) z[lay.i_m] = params.skew.m;
  return z;
}

SpeusParams unpack_params(const SpeusProblem& problem, const FitOptions& opts,
                          const Eigen::VectorXd& z) {
  Layout lay(problem, opts);
  SpeusParams out;
  out.beta = z.head(lay.p);
  out.alpha = lay.intercept ? z[lay.i_alpha] : 0.0;
  out.skew.sigma = std::exp(z[lay.i_s]);
  out.skew.nu = lay.equal_scales ? out.skew.sigma : std::exp(z[lay.i_t]);
  out.skew.m = lay.fix_m ? opts.m_fixed : z[lay.i_m];
  return out;
}

double speus_objective(const SpeusProblem& problem, const FitOptions& opts,
                       const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
  const Layout lay(problem, opts);
  const int n = static_cast<int>(problem.y.size());
  const double tau_s = resolved_tau(opts.tau_scale, n);
  const double tau_m = resolved_tau(opts.tau_pivot, n);
  const double s = z[lay.i_s];
  const double t = lay.equal_scales ? s : z[lay.i_t];
  if (std::fabs(s) > 300.0 || std::fabs(t) > 300.0) return kInf;
  const double sigma = std::exp(s);
  const double nu = std::exp(t);
  const double m = lay.fix_m ? opts.m_fixed : z[lay.i_m];
  if (!std::isfinite(m)) return kInf;

  const BaseDensity& base = problem.base;
  const double q = base.cdf(m);
  const double zn = sigma * q + nu * (1.0 - q);
  if (!(zn > 0.0) || !std::isfinite(zn)) return kInf;

  Eigen::VectorXd r = problem.y - problem.x * z.head(lay.p);
  if (lay.intercept) r.array() -= z[lay.i_alpha];

  double acc = n * std::log(zn) +
               0.5 * tau_s * (1.0 / (sigma * sigma) + 1.0 / (nu * nu)) +
               0.5 * tau_m * m * m;
  double sl = 0.0, sr = 0.0, al = 0.0, ar = 0.0;
  Eigen::VectorXd w;
  if (grad) w.setZero(n);
  for (int i = 0; i < n; ++i) {
    const bool left = r[i] <= m;
    const double sc = left ? sigma : nu;
    const double u = (r[i] - m) / sc + m;
    const double l = base.loss(u);
    if (!std::isfinite(l)) return kInf;
    acc += l;
    if (grad) {
      const double d = base.dloss(u);
      if (left) {
        sl += d;
        al += d * (u - m);
      } else {
        sr += d;
        ar += d * (u - m);
      }
      w[i] = d / sc;
    }
  }
  if (!std::isfinite(acc)) return kInf;

  if (grad) {
    grad->resize(lay.size);
    grad->head(lay.p) = -problem.x.transpose() * w;
    if (lay.intercept) (*grad)[lay.i_alpha] = -w.sum();
    const double gs = n * q * sigma / zn - al - tau_s / (sigma * sigma);
    const double gt = n * (1.0 - q) * nu / zn - ar - tau_s / (nu * nu);
    if (lay.equal_scales)
      (*grad)[lay.i_s] = gs + gt;
    else {
      (*grad)[lay.i_s] = gs;
      (*grad)[lay.i_t] = gt;
    }
    if (!lay.fix_m) {
      const double phim = base.pdf(m);
      (*grad)[lay.i_m] = n * (sigma - nu) * phim / zn +
                         (1.0 - 1.0 / sigma) * sl + (1.0 - 1.0 / nu) * sr +
                         tau_m * m;
    }
  }
  return acc;
}

namespace {

struct StartPoint {
  double m0 = 0.0;
  double alpha0 = 0.0;
};

// Least-squares pilot; all starts share its coefficients so the pivot grid
// scans quantiles of realistic residuals instead of the raw response.
struct Pilot {
  Eigen::VectorXd beta;
  double alpha = 0.0;
  Eigen::VectorXd resid;
};

Pilot ols_pilot(const SpeusProblem& problem) {
  const int n = static_cast<int>(problem.y.size());
  const int p = static_cast<int>(problem.x.cols());
  Pilot out;
  out.beta = Eigen::VectorXd::Zero(p);
  if (problem.include_intercept) {
    Eigen::MatrixXd xa(n, p + 1);
    if (p > 0) xa.leftCols(p) = problem.x;
    xa.col(p).setOnes();
    Eigen::VectorXd sol = xa.colPivHouseholderQr().solve(problem.y);
    out.beta = sol.head(p);
    out.alpha = sol[p];
  } else if (p > 0) {
    out.beta = problem.x.colPivHouseholderQr().solve(problem.y);
  }
  out.resid = problem.y - problem.x * out.beta;
  out.resid.array() -= out.alpha;
  return out;
}

std::vector<StartPoint> build_starts(const SpeusProblem& problem,
                                     const FitOptions& opts,
                                     const Pilot& pilot) {
  std::vector<StartPoint> starts;
  std::vector<double> ev(pilot.resid.data(),
                         pilot.resid.data() + pilot.resid.size());
  const double med = empirical_quantile(ev, 0.5);
  const bool bounded = std::isfinite(problem.base.support_lower());
  const bool has_alpha = problem.include_intercept;
  if (opts.fix_m) {
    double a0 = pilot.alpha;
    if (bounded && has_alpha) a0 = pilot.alpha + med - opts.m_fixed;
    starts.push_back({opts.m_fixed, a0});
    return starts;
  }
  for (double k : opts.m_grid_quantiles) {
    if (!bounded) {
      starts.push_back({empirical_quantile(ev, k), pilot.alpha});
    } else {
      // Put the pivot at a base quantile and shift the intercept so the
      // matching residual quantile lands on it.
      double m0 = problem.base.quantile(k);
      double a0 = has_alpha ? pilot.alpha + empirical_quantile(ev, k) - m0
                            : 0.0;
      starts.push_back({m0, a0});
    }
  }
  starts.push_back(
      {0.0, bounded && has_alpha ? pilot.alpha + med : pilot.alpha});
  return starts;
}

// Signed distance (in residual units) from the nearest observation to the
// support wall of the blend: min_i r_i - (m + sc_i (L - m)) with sc_i the
// branch scale of observation i.  Positive inside the feasible region.
// grad (optional) holds the subgradient at the arg-min observation.
double support_gap(const SpeusProblem& problem, const FitOptions& opts,
                   const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
  const Layout lay(problem, opts);
  const double lsup = problem.base.support_lower();
  const double sigma = std::exp(z[lay.i_s]);
  const double nu = lay.equal_scales ? sigma : std::exp(z[lay.i_t]);
  const double m = lay.fix_m ? opts.m_fixed : z[lay.i_m];
  Eigen::VectorXd r = problem.y - problem.x * z.head(lay.p);
  if (lay.intercept) r.array() -= z[lay.i_alpha];
  double gap = kInf;
  int arg = -1;
  for (int i = 0; i < r.size(); ++i) {
    const double sc = r[i] <= m ? sigma : nu;
    const double gi = r[i] - (m + sc * (lsup - m));
    if (gi < gap) {
      gap = gi;
      arg = i;
    }
  }
  if (grad && arg >= 0) {
    grad->setZero(lay.size);
    const bool left = r[arg] <= m;
    const double sc = left ? sigma : nu;
    grad->head(lay.p) = -problem.x.row(arg).transpose();
    if (lay.intercept) (*grad)[lay.i_alpha] = -1.0;
    const double dsc = -sc * (lsup - m);  // d/d(log scale)
    if (left)
      (*grad)[lay.i_s] += dsc;
    else if (!lay.equal_scales)
      (*grad)[lay.i_t] += dsc;
    else
      (*grad)[lay.i_s] += dsc;
    if (!lay.fix_m) (*grad)[lay.i_m] = sc - 1.0;
  }
  return gap;
}

// Interior-point continuation for optima pinned on the support wall, where
// line searches collapse: minimize f(z) - mu log gap(z) for a decreasing
// ladder of mu.  Returns the final smooth-objective result.
OptimResult barrier_continuation(const SpeusProblem& problem,
                                 const FitOptions& opts,
                                 const Eigen::VectorXd& z_start,
                                 const OptimOptions& optim) {
  const Layout lay(problem, opts);
  const double n = static_cast<double>(problem.y.size());
  Eigen::VectorXd z = z_start;
  // The start may sit exactly on the wall; widen the scales until a strictly
  // positive gap opens.
  for (int k = 0; k < 60 && !(support_gap(problem, opts, z, nullptr) > 0.0);
       ++k) {
    z[lay.i_s] += 1e-8 * std::pow(2.0, k);
    if (!lay.equal_scales) z[lay.i_t] += 1e-8 * std::pow(2.0, k);
  }
  OptimResult last;
  last.x = z;
  last.converged = false;
  if (!(support_gap(problem, opts, z, nullptr) > 0.0)) {
    last.value = speus_objective(problem, opts, z_start);
    last.x = z_start;
    last.note = "barrier: no interior point found";
    return last;
  }
  for (double mu = 1e-2 * n; mu >= 0.9e-8 * n; mu *= 0.1) {
    auto barrier = [&](const Eigen::VectorXd& w, Eigen::VectorXd* g) {
      Eigen::VectorXd gf, ga;
      double fv = speus_objective(problem, opts, w, g ? &gf : nullptr);
      if (!std::isfinite(fv)) return kInf;
      double a = support_gap(problem, opts, w, g ? &ga : nullptr);
      if (!(a > 0.0)) return kInf;
      if (g) *g = gf - (mu / a) * ga;
      return fv - mu * std::log(a);
    };
    if (!std::isfinite(barrier(z, nullptr))) break;
    OptimResult rb = minimize_bfgs(barrier, z, optim);
    z = rb.x;
    last.converged = rb.converged;
    last.iters += rb.iters;
  }
  last.x = z;
  last.value = speus_objective(problem, opts, z);
  last.note = "barrier continuation";
  return last;
}

}  // namespace

namespace {

struct StartOutcome {
  OptimResult result;
  bool feasible = true;
};

// Shared per-start pipeline: feasibility repair by scale inflation, then
// BFGS, then boundary continuation and a derivative-free polish when the
// line search collapses.
StartOutcome run_start_chain(const SpeusProblem& problem,
                             const FitOptions& opts, Eigen::VectorXd z0) {
  const Layout lay(problem, opts);
  auto objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* g) {
    return speus_objective(problem, opts, z, g);
  };

  StartOutcome out;
  // Feasibility repair: residuals outside the blended support give +inf;
  // inflating the scales widens the support.
  double f0 = objective(z0, nullptr);
  int repairs = 0;
  while (!std::isfinite(f0) && repairs < 60) {
    z0[lay.i_s] += std::log(2.0);
    if (!lay.equal_scales) z0[lay.i_t] += std::log(2.0);
    f0 = objective(z0, nullptr);
    ++repairs;
  }
  if (!std::isfinite(f0)) {
    out.feasible = false;
    out.result.value = kInf;
    return out;
  }

  OptimResult r = minimize_bfgs(objective, z0, opts.optim);
  if (!r.converged && std::isfinite(problem.base.support_lower())) {
    // Gradient steps collapse when the optimum sits on the support
    // boundary of the blend; interior-point continuation slides along it.
    OptimResult cont = barrier_continuation(problem, opts, r.x, opts.optim);
    if (cont.value <= r.value) {
      cont.note = r.note + "; " + cont.note;
      cont.iters += r.iters;
      Eigen::VectorXd g;
      speus_objective(problem, opts, cont.x, &g);
      cont.grad = g;
      r = cont;
    }
  }
  if (!r.converged) {
    // Generic derivative-free fallback for smooth but awkward stalls.
    OptimResult polished = minimize_simplex(objective, r.x);
    if (polished.value < r.value) {
      polished.note = r.note + "; " + polished.note;
      polished.iters += r.iters;
      Eigen::VectorXd g;
      speus_objective(problem, opts, polished.x, &g);
      polished.grad = g;
      r = polished;
    }
  }
  out.result = std::move(r);
  return out;
}

}  // namespace

SPFit speus_fit(const SpeusProblem& problem, const FitOptions& opts) {
  if (problem.y.size() != problem.x.rows())
    throw std::invalid_argument("speus_fit: y and X row counts differ");
  if (problem.y.size() < 3)
    throw std::invalid_argument("speus_fit: need at least 3 observations");
  const Layout lay(problem, opts);
  const Pilot pilot = ols_pilot(problem);
  const double s0_base = std::log(std::max(sample_sd(pilot.resid), 1e-3));

  SPFit fit;
  double best = kInf;

  const std::vector<StartPoint> starts = build_starts(problem, opts, pilot);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    StartTrace trace;
    trace.m0 = starts[k].m0;
    trace.alpha0 = starts[k].alpha0;
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(lay.size);
    z0.head(lay.p) = pilot.beta;
    if (lay.intercept) z0[lay.i_alpha] = starts[k].alpha0;
    z0[lay.i_s] = s0_base;
    if (!lay.equal_scales) z0[lay.i_t] = s0_base;
    if (!lay.fix_m) z0[lay.i_m] = starts[k].m0;

    StartOutcome outcome = run_start_chain(problem, opts, std::move(z0));
    if (!outcome.feasible) {
      trace.feasible = false;
      trace.note = "infeasible start";
      trace.value = kInf;
      fit.starts.push_back(trace);
      continue;
    }
    OptimResult r = std::move(outcome.result);
    trace.value = r.value;
    trace.converged = r.converged;
    trace.iters = r.iters;
    trace.note = r.note;
    fit.starts.push_back(trace);
    if (r.value < best) {
      best = r.value;
      SpeusParams params = unpack_params(problem, opts, r.x);
      fit.beta = params.beta;
      fit.alpha = params.alpha;
      fit.skew = params.skew;
      fit.objective = r.value;
      fit.converged = r.converged;
      fit.iters = r.iters;
      fit.grad_norm = r.grad.lpNorm<Eigen::Infinity>();
      fit.start_index = static_cast<int>(k);
    }
  }

  if (!(best < kInf)) {
    std::ostringstream os;
    os << "speus_fit: all " << starts.size() << " starts failed;";
    for (const auto& tr : fit.starts)
      os << " [m0=" << tr.m0 << " " << tr.note << "]";
    throw OptimizationFailure(os.str());
  }

  // Report floored scales and flag degeneracy / pivot-outside-support.  The
  // scale ridge stops estimates just above sqrt(tau/n); landing near that
  // floor means the data carry (almost) no residual noise on that branch.
  if (fit.skew.sigma < 1e-10) fit.skew.sigma = 1e-10;
  if (fit.skew.nu < 1e-10) fit.skew.nu = 1e-10;
  const double tau_s = resolved_tau(opts.tau_scale, static_cast<int>(problem.y.size()));
  const double floor = std::max(
      1e-8, 2.0 * std::sqrt(tau_s / static_cast<double>(problem.y.size())));
  if (fit.skew.sigma <= floor || fit.skew.nu <= floor)
    fit.warnings.push_back(
        "degenerate fit: a scale collapsed to the penalty floor");
  const double qhat = problem.base.cdf(fit.skew.m);
  if (qhat <= 0.0 || qhat >= 1.0)
    fit.warnings.push_back(
        "pivot outside base support: blend degenerates to location-scale");
  if (!fit.converged)
    fit.warnings.push_back("best start did not meet convergence tolerances");
  return fit;
}

SPFit speus_fit_warm(const SpeusProblem& problem, const FitOptions& opts,
                     const SpeusParams& start) {
  if (problem.y.size() != problem.x.rows())
    throw std::invalid_argument("speus_fit_warm: y and X row counts differ");
  if (start.beta.size() != problem.x.cols())
    throw std::invalid_argument("speus_fit_warm: start has wrong dimension");
  if (!(start.skew.sigma > 0.0) || !(start.skew.nu > 0.0))
    throw std::invalid_argument("speus_fit_warm: start scales must be positive");

  StartOutcome outcome =
      run_start_chain(problem, opts, pack_params(problem, opts, start));
  if (!outcome.feasible)
    throw OptimizationFailure(
        "speus_fit_warm: start infeasible even after scale inflation");
  const OptimResult& r = outcome.result;

  SPFit fit;
  SpeusParams params = unpack_params(problem, opts, r.x);
  fit.beta = params.beta;
  fit.alpha = params.alpha;
  fit.skew = params.skew;
  fit.objective = r.value;
  fit.converged = r.converged;
  fit.iters = r.iters;
  fit.grad_norm = r.grad.lpNorm<Eigen::Infinity>();
  fit.start_index = 0;
  StartTrace trace;
  trace.m0 = start.skew.m;
  trace.alpha0 = start.alpha;
  trace.value = r.value;
  trace.converged = r.converged;
  trace.iters = r.iters;
  trace.note = r.note;
  fit.starts.push_back(trace);

  const double tau_s =
      resolved_tau(opts.tau_scale, static_cast<int>(problem.y.size()));
  const double floor = std::max(
      1e-8, 2.0 * std::sqrt(tau_s / static_cast<double>(problem.y.size())));
  if (fit.skew.sigma <= floor || fit.skew.nu <= floor)
    fit.warnings.push_back(
        "degenerate fit: a scale collapsed to the penalty floor");
  const double qhat = problem.base.cdf(fit.skew.m);
  if (qhat <= 0.0 || qhat >= 1.0)
    fit.warnings.push_back(
        "pivot outside base support: blend degenerates to location-scale");
  if (!fit.converged)
    fit.warnings.push_back("warm start did not meet convergence tolerances");
  return fit;
}

BoundedLoss tukey_loss(double c) {
  BoundedLoss out;
  out.name = "tukey";
  out.bound = c * c / 6.0;
  out.rho = [c](double t) {
    double a = std::fabs(t);
    if (a >= c) return c * c / 6.0;
    double w = 1.0 - (t / c) * (t / c);
    return c * c / 6.0 * (1.0 - w * w * w);
  };
  out.drho = [c](double t) {
    if (std::fabs(t) >= c) return 0.0;
    double w = 1.0 - (t / c) * (t / c);
    return t * w * w;
  };
  return out;
}

BoundedLoss hampel_loss(double a, double b, double c) {
  if (!(0.0 < a && a <= b && b <= c))
    throw std::invalid_argument("hampel_loss: need 0 < a <= b <= c");
  BoundedLoss out;
  out.name = "hampel";
  out.bound = a * (b + c - a) / 2.0;
  out.rho = [a, b, c](double t) {
    double x = std::fabs(t);
    if (x <= a) return 0.5 * x * x;
    if (x <= b) return a * x - 0.5 * a * a;
    if (x <= c) {
      double w = (c - x) / (c - b);
      return a * b - 0.5 * a * a + 0.5 * a * (c - b) * (1.0 - w * w);
    }
    return a * (b + c - a) / 2.0;
  };
  out.drho = [a, b, c](double t) {
    double x = std::fabs(t);
    double s = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
    if (x <= a) return t;
    if (x <= b) return a * s;
    if (x <= c) return s * a * (c - x) / (c - b);
    return 0.0;
  };
  return out;
}

int bounded_packed_size(const SpeusProblem& problem, const FitOptions& opts) {
  int p = static_cast<int>(problem.x.cols());
  return p + (problem.include_intercept ? 1 : 0) + (opts.fix_m ? 0 : 1);
}

double bounded_objective(const SpeusProblem& problem, const BoundedFitSpec& spec,
                         const FitOptions& opts, const Eigen::VectorXd& z,
                         Eigen::VectorXd* grad) {
  const int p = static_cast<int>(problem.x.cols());
  const int n = static_cast<int>(problem.y.size());
  const bool intercept = problem.include_intercept;
  const int i_alpha = intercept ? p : -1;
  const int i_m = opts.fix_m ? -1 : p + (intercept ? 1 : 0);
  const double m = opts.fix_m ? opts.m_fixed : z[i_m];
  const double sigma = spec.sigma;
  const double nu = spec.nu;
  auto cdf = spec.base_cdf ? spec.base_cdf : normal_cdf;
  auto pdf = spec.base_pdf ? spec.base_pdf : normal_pdf;
  const double q = cdf(m);
  const double zn = sigma * q + nu * (1.0 - q);
  if (!(zn > 0.0) || !std::isfinite(zn)) return kInf;

  Eigen::VectorXd r = problem.y - problem.x * z.head(p);
  if (intercept) r.array() -= z[i_alpha];

  double acc = n * spec.chi0 * std::log(zn);
  double sl = 0.0, sr = 0.0;
  Eigen::VectorXd w;
  if (grad) w.setZero(n);
  for (int i = 0; i < n; ++i) {
    const bool left = r[i] <= m;
    const double sc = left ? sigma : nu;
    const double u = (r[i] - m) / sc + m;
    acc += spec.loss.rho(u);
    if (grad) {
      const double d = spec.loss.drho(u);
      (left ? sl : sr) += d;
      w[i] = d / sc;
    }
  }
  if (grad) {
    grad->resize(z.size());
    grad->head(p) = -problem.x.transpose() * w;
    if (intercept) (*grad)[i_alpha] = -w.sum();
    if (!opts.fix_m)
      (*grad)[i_m] = n * spec.chi0 * (sigma - nu) * pdf(m) / zn +
                     (1.0 - 1.0 / sigma) * sl + (1.0 - 1.0 / nu) * sr;
  }
  return acc;
}

SPFit speus_fit_bounded(const SpeusProblem& problem, const BoundedFitSpec& spec,
                        const FitOptions& opts) {
  if (problem.y.size() != problem.x.rows())
    throw std::invalid_argument("speus_fit_bounded: y and X row counts differ");
  if (!(spec.sigma > 0.0) || !(spec.nu > 0.0))
    throw std::invalid_argument("speus_fit_bounded: scales must be positive");
  const int p = static_cast<int>(problem.x.cols());
  const bool intercept = problem.include_intercept;
  const int size = bounded_packed_size(problem, opts);
  std::vector<double> yv(problem.y.data(), problem.y.data() + problem.y.size());

  auto objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* g) {
    return bounded_objective(problem, spec, opts, z, g);
  };

  SPFit fit;
  double best = kInf;
  std::vector<double> m_starts;
  if (opts.fix_m) {
    m_starts.push_back(opts.m_fixed);
  } else {
    for (double k : opts.m_grid_quantiles)
      m_starts.push_back(empirical_quantile(yv, k));
    m_starts.push_back(0.0);
  }
  for (std::size_t k = 0; k < m_starts.size(); ++k) {
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(size);
    if (!opts.fix_m) z0[size - 1] = m_starts[k];
    OptimResult r = minimize_bfgs(objective, z0, opts.optim);
    StartTrace trace;
    trace.m0 = m_starts[k];
    trace.value = r.value;
    trace.converged = r.converged;
    trace.iters = r.iters;
    trace.note = r.note;
    fit.starts.push_back(trace);
    if (r.value < best) {
      best = r.value;
      fit.beta = r.x.head(p);
      fit.alpha = intercept ? r.x[p] : 0.0;
      fit.skew.sigma = spec.sigma;
      fit.skew.nu = spec.nu;
      fit.skew.m = opts.fix_m ? opts.m_fixed : r.x[size - 1];
      fit.objective = r.value;
      fit.converged = r.converged;
      fit.iters = r.iters;
      fit.grad_norm = r.grad.lpNorm<Eigen::Infinity>();
      fit.start_index = static_cast<int>(k);
    }
  }
  if (!(best < kInf))
    throw OptimizationFailure("speus_fit_bounded: all starts failed");
  return fit;
}

double rank_criterion(const Eigen::VectorXd& residuals, const SkewSpec& skew) {
  const int n = static_cast<int>(residuals.size());
  const double m = skew.m;
  const double sigma = skew.sigma;
  const double nu = skew.nu;
  if (!(sigma > 0.0) || !(nu > 0.0))
    throw std::invalid_argument("rank_criterion: scales must be positive");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = std::fabs(residuals[i] - residuals[j]);
      double term = 0.0;
      if (d > m)
        term = (d - m) / nu + m;
      else if (d >= m * (1.0 - sigma))
        term = (d - m) / sigma + m;
      acc += 2.0 * term;  // ordered pairs count each unordered pair twice
    }
  }
  const double q = m > 0.0 ? -std::expm1(-m) : 0.0;  // exponential CDF at m
  acc += static_cast<double>(n) * (n - 1) *
         std::log(sigma * q + nu * (1.0 - q));
  return acc;
}

AbsorbResult absorb_pivot(const SPFit& fit, double resid_min,
                          double resid_max) {
  AbsorbResult out;
  const double sigma = fit.skew.sigma;
  const double nu = fit.skew.nu;
  const double m = fit.skew.m;
  const double rel = std::fabs(sigma - nu) / std::max(sigma, nu);
  if (rel < 1e-8) {
    out.absorbed = true;
    out.reason = "scales equal within tolerance";
  } else if (m < resid_min || m > resid_max) {
    out.absorbed = true;
    out.reason = "pivot outside the residual range";
  } else {
    out.reason = "scales differ and the pivot lies inside the residual range";
  }
  out.alpha_prime = out.absorbed ? fit.alpha + (1.0 - sigma) * m : fit.alpha;
  return out;
}

}  // namespace pivotblend
