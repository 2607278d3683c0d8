#include "pivotblend/twopart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pivotblend/rng.hpp"
#include "pivotblend/special.hpp"

namespace pivotblend {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double Transform::operator()(double y) const {
  switch (kind) {
    case TransformKind::Log:
      return std::log(y);
    case TransformKind::Identity:
      return y;
    case TransformKind::Power:
      return (std::pow(y, power) - 1.0) / power;
  }
  return y;
}

TwoPartData two_part_partition(const TwoPartProblem& problem) {
  const int n_rows = static_cast<int>(problem.y.size());
  const int p = static_cast<int>(problem.x.cols());
  if (problem.x.rows() != n_rows)
    throw std::invalid_argument("two_part_partition: X and y row counts differ");
  if (n_rows < 2)
    throw std::invalid_argument("two_part_partition: need at least 2 rows");

  TwoPartData data;
  data.zero_flag.resize(n_rows);
  int suspicious = 0;
  for (int i = 0; i < n_rows; ++i) {
    const double yi = problem.y[i];
    if (!(yi >= 0.0))
      throw std::invalid_argument(
          "two_part_partition: responses must be nonnegative");
    const bool zero = yi == 0.0;
    data.zero_flag[i] = zero ? 1.0 : 0.0;
    if (zero) {
      ++data.n_zero;
    } else {
      if (yi < 1e-12) ++suspicious;
      data.pos_index.push_back(i);
    }
  }
  data.n_pos = static_cast<int>(data.pos_index.size());
  if (data.n_zero == 0 || data.n_pos == 0)
    throw std::invalid_argument(
        "two_part_partition: need both zero and positive responses");
  if (suspicious > 0) {
    std::ostringstream os;
    os << suspicious << " positive response(s) below 1e-12: treated as "
       << "positive, check for rounding artifacts";
    data.warnings.push_back(os.str());
  }

  data.x_pos.resize(data.n_pos, p);
  data.ty.resize(data.n_pos);
  for (int r = 0; r < data.n_pos; ++r) {
    data.x_pos.row(r) = problem.x.row(data.pos_index[r]);
    data.ty[r] = problem.transform(problem.y[data.pos_index[r]]);
    if (!std::isfinite(data.ty[r]))
      throw std::invalid_argument(
          "two_part_partition: transform produced a non-finite value");
  }

  data.col_scale_x.resize(p);
  data.col_scale_z.resize(p);
  for (int k = 0; k < p; ++k) {
    if (problem.column_normalize) {
      data.col_scale_x[k] = std::max(data.x_pos.col(k).norm(), 1e-12);
      data.col_scale_z[k] = std::max(problem.x.col(k).norm(), 1e-12);
    } else {
      data.col_scale_x[k] = std::sqrt(static_cast<double>(data.n_pos));
      data.col_scale_z[k] = std::sqrt(static_cast<double>(n_rows));
    }
  }
  return data;
}

namespace {

SpeusProblem continuous_view(const TwoPartProblem& problem,
                             const TwoPartData& data) {
  SpeusProblem sp;
  sp.x = data.x_pos;
  sp.y = data.ty;
  sp.base = problem.base;
  sp.include_intercept = true;
  return sp;
}

FitOptions continuous_options(const TwoPartProblem& problem,
                              const OptimOptions& optim) {
  FitOptions fo;
  fo.tau_scale = problem.tau;
  fo.tau_pivot = problem.tau;
  fo.optim = optim;
  return fo;
}

// Binary negative log-likelihood: sum log(1+exp(eta)) - zero_flag . eta.
double binary_nll(const TwoPartProblem& problem, const TwoPartData& data,
                  const Eigen::VectorXd& zb, Eigen::VectorXd* grad) {
  const int p = static_cast<int>(problem.x.cols());
  Eigen::VectorXd eta = problem.x * zb.head(p);
  eta.array() += zb[p];
  double f = 0.0;
  for (int i = 0; i < eta.size(); ++i)
    f += log1pexp(eta[i]) - data.zero_flag[i] * eta[i];
  if (grad) {
    Eigen::VectorXd resid(eta.size());
    for (int i = 0; i < eta.size(); ++i)
      resid[i] = sigmoid(eta[i]) - data.zero_flag[i];
    grad->resize(p + 1);
    grad->head(p) = problem.x.transpose() * resid;
    (*grad)[p] = resid.sum();
  }
  return f;
}

Eigen::VectorXd pack_continuous(const TwoPartParams& params) {
  const int p = static_cast<int>(params.beta.size());
  Eigen::VectorXd zc(p + 4);
  zc.head(p) = params.beta;
  zc[p] = params.alpha;
  zc[p + 1] = std::log(params.skew.sigma);
  zc[p + 2] = std::log(params.skew.nu);
  zc[p + 3] = params.skew.m;
  return zc;
}

void unpack_continuous(const Eigen::VectorXd& zc, TwoPartParams* params) {
  const int p = static_cast<int>(zc.size()) - 4;
  params->beta = zc.head(p);
  params->alpha = zc[p];
  params->skew.sigma = std::exp(zc[p + 1]);
  params->skew.nu = std::exp(zc[p + 2]);
  params->skew.m = zc[p + 3];
}

double penalty_value(const TwoPartData& data, const Eigen::VectorXd& beta,
                     const Eigen::VectorXd& b) {
  double acc = 0.0;
  for (int k = 0; k < beta.size(); ++k)
    acc += std::hypot(data.col_scale_x[k] * beta[k],
                      data.col_scale_z[k] * b[k]);
  return acc;
}

// Intercept-only fit of both parts (the null model).
TwoPartParams null_params(const TwoPartProblem& problem,
                          const TwoPartData& data, const OptimOptions& optim) {
  TwoPartParams params;
  const int p = static_cast<int>(problem.x.cols());
  params.beta = Eigen::VectorXd::Zero(p);
  params.b = Eigen::VectorXd::Zero(p);
  const double share = static_cast<double>(data.n_zero) /
                       static_cast<double>(data.zero_flag.size());
  params.b0 = std::log(share / (1.0 - share));

  SpeusProblem sp;
  sp.x.resize(data.n_pos, 0);
  sp.y = data.ty;
  sp.base = problem.base;
  FitOptions fo = continuous_options(problem, optim);
  SPFit fit = speus_fit(sp, fo);
  params.alpha = fit.alpha;
  params.skew = fit.skew;
  return params;
}

}  // namespace

double s2_objective(const TwoPartProblem& problem, const TwoPartParams& params,
                    double lambda) {
  TwoPartData data = two_part_partition(problem);
  SpeusProblem sp = continuous_view(problem, data);
  FitOptions fo = continuous_options(problem, {});
  SpeusParams cp;
  cp.beta = params.beta;
  cp.alpha = params.alpha;
  cp.skew = params.skew;
  const double cont = speus_objective(sp, fo, pack_params(sp, fo, cp));
  Eigen::VectorXd zb(params.b.size() + 1);
  zb.head(params.b.size()) = params.b;
  zb[params.b.size()] = params.b0;
  const double bin = binary_nll(problem, data, zb, nullptr);
  return cont + bin + lambda * penalty_value(data, params.beta, params.b);
}

double lambda_max(const TwoPartProblem& problem) {
  TwoPartData data = two_part_partition(problem);
  S2Options opts;
  TwoPartParams params = null_params(problem, data, opts.optim);
  SpeusProblem sp = continuous_view(problem, data);
  FitOptions fo = continuous_options(problem, opts.optim);

  Eigen::VectorXd zc = pack_continuous(params);
  Eigen::VectorXd gc;
  speus_objective(sp, fo, zc, &gc);

  const int p = static_cast<int>(problem.x.cols());
  Eigen::VectorXd zb(p + 1);
  zb.head(p) = params.b;
  zb[p] = params.b0;
  Eigen::VectorXd gb;
  binary_nll(problem, data, zb, &gb);

  double lam = 0.0;
  for (int k = 0; k < p; ++k)
    lam = std::max(lam, std::hypot(gc[k] / data.col_scale_x[k],
                                   gb[k] / data.col_scale_z[k]));
  return lam;
}

TwoPartFit s2_fit(const TwoPartProblem& problem, double lambda,
                  const S2Options& opts) {
  if (!(lambda >= 0.0))
    throw std::invalid_argument("s2_fit: lambda must be nonnegative");
  TwoPartData data = two_part_partition(problem);
  const int p = static_cast<int>(problem.x.cols());

  TwoPartParams params =
      opts.has_warm ? opts.warm : null_params(problem, data, opts.optim);
  if (params.beta.size() != p || params.b.size() != p)
    throw std::invalid_argument("s2_fit: warm start has wrong dimension");

  SpeusProblem sp = continuous_view(problem, data);
  FitOptions fo = continuous_options(problem, opts.optim);

  Eigen::VectorXd zc = pack_continuous(params);
  Eigen::VectorXd zb(p + 1);
  zb.head(p) = params.b;
  zb[p] = params.b0;

  TwoPartFit fit;
  fit.lambda = lambda;
  fit.warnings = data.warnings;

  auto true_objective = [&](const Eigen::VectorXd& zc_,
                            const Eigen::VectorXd& zb_) {
    const double cont = speus_objective(sp, fo, zc_);
    if (!std::isfinite(cont)) return cont;
    const double bin = binary_nll(problem, data, zb_, nullptr);
    return cont + bin +
           lambda * penalty_value(data, zc_.head(p), zb_.head(p));
  };

  auto row_norm = [&](int k) {
    return std::hypot(data.col_scale_x[k] * zc[k],
                      data.col_scale_z[k] * zb[k]);
  };

  // Snap near-zero rows to exact zeros when doing so does not raise the
  // criterion; this keeps inactive rows genuinely inactive instead of
  // leaving optimizer dust around the origin.
  auto snap_tiny_rows = [&](double& cur) {
    if (lambda <= 0.0) return;
    double max_norm = 1.0;
    for (int k = 0; k < p; ++k) max_norm = std::max(max_norm, row_norm(k));
    Eigen::VectorXd zc_try = zc;
    Eigen::VectorXd zb_try = zb;
    bool any = false;
    for (int k = 0; k < p; ++k) {
      const double nk = row_norm(k);
      if (nk > 0.0 && nk <= 1e-6 * max_norm) {
        zc_try[k] = 0.0;
        zb_try[k] = 0.0;
        any = true;
      }
    }
    if (!any) return;
    const double ft = true_objective(zc_try, zb_try);
    if (std::isfinite(ft) && ft <= cur + 1e-12 * (1.0 + std::fabs(cur))) {
      zc = std::move(zc_try);
      zb = std::move(zb_try);
      cur = std::min(cur, ft);
    }
  };

  // Majorize-minimize converges slowly once the support settles, so a joint
  // quasi-Newton pass on the exact penalized objective finishes the job.
  // Rows at exact zero stay frozen (the penalty is not differentiable
  // there); with lambda == 0 every coordinate is free.
  auto polish = [&](double& cur) {
    std::vector<int> free_rows;
    for (int k = 0; k < p; ++k)
      if (lambda == 0.0 || row_norm(k) > 0.0) free_rows.push_back(k);
    const int a = static_cast<int>(free_rows.size());
    // Layout: scaled beta rows, alpha, s, t, m, scaled b rows, b0.
    Eigen::VectorXd v(2 * a + 5);
    for (int j = 0; j < a; ++j) {
      v[j] = data.col_scale_x[free_rows[j]] * zc[free_rows[j]];
      v[a + 4 + j] = data.col_scale_z[free_rows[j]] * zb[free_rows[j]];
    }
    v.segment(a, 4) = zc.tail(4);
    v[2 * a + 4] = zb[p];

    auto expand = [&](const Eigen::VectorXd& vv, Eigen::VectorXd* zc_out,
                      Eigen::VectorXd* zb_out) {
      *zc_out = zc;
      *zb_out = zb;
      for (int j = 0; j < a; ++j) {
        (*zc_out)[free_rows[j]] = vv[j] / data.col_scale_x[free_rows[j]];
        (*zb_out)[free_rows[j]] =
            vv[a + 4 + j] / data.col_scale_z[free_rows[j]];
      }
      zc_out->tail(4) = vv.segment(a, 4);
      (*zb_out)[p] = vv[2 * a + 4];
    };

    auto joint = [&](const Eigen::VectorXd& vv, Eigen::VectorXd* g) {
      Eigen::VectorXd zc_v, zb_v;
      expand(vv, &zc_v, &zb_v);
      Eigen::VectorXd gc, gb;
      double f = speus_objective(sp, fo, zc_v, g ? &gc : nullptr);
      if (!std::isfinite(f)) return f;
      f += binary_nll(problem, data, zb_v, g ? &gb : nullptr);
      if (g) {
        g->resize(vv.size());
        for (int j = 0; j < a; ++j) {
          (*g)[j] = gc[free_rows[j]] / data.col_scale_x[free_rows[j]];
          (*g)[a + 4 + j] = gb[free_rows[j]] / data.col_scale_z[free_rows[j]];
        }
        g->segment(a, 4) = gc.tail(4);
        (*g)[2 * a + 4] = gb[p];
      }
      for (int j = 0; j < a; ++j) {
        const double norm_j = std::hypot(vv[j], vv[a + 4 + j]);
        f += lambda * norm_j;
        if (g && norm_j > 1e-12) {
          (*g)[j] += lambda * vv[j] / norm_j;
          (*g)[a + 4 + j] += lambda * vv[a + 4 + j] / norm_j;
        }
      }
      return f;
    };

    OptimResult r = minimize_bfgs(joint, v, opts.optim);
    Eigen::VectorXd zc_new, zb_new;
    expand(r.x, &zc_new, &zb_new);
    const double ft = true_objective(zc_new, zb_new);
    if (std::isfinite(ft) && ft <= cur) {
      zc = std::move(zc_new);
      zb = std::move(zb_new);
      cur = ft;
    }
  };

  // The intercept-and-skew surface is multimodal in the pivot, so a fit can
  // settle in a poor pivot basin (the per-fit multistart only guards the
  // cold start).  Refitting intercept and skew on the current residuals
  // with the full multistart escapes such basins cheaply.
  auto refresh_skew_basin = [&](double& cur) {
    SpeusProblem ip;
    ip.x.resize(data.n_pos, 0);
    ip.y = sp.y - sp.x * zc.head(p);
    ip.base = problem.base;
    FitOptions ifo = fo;
    SPFit ifit;
    try {
      ifit = speus_fit(ip, ifo);
    } catch (const OptimizationFailure&) {
      return false;
    }
    Eigen::VectorXd zc_try = zc;
    zc_try[p] = ifit.alpha;
    zc_try[p + 1] = std::log(ifit.skew.sigma);
    zc_try[p + 2] = std::log(ifit.skew.nu);
    zc_try[p + 3] = ifit.skew.m;
    const double ft = true_objective(zc_try, zb);
    if (std::isfinite(ft) && ft < cur - 1e-10 * (1.0 + std::fabs(cur))) {
      zc = std::move(zc_try);
      cur = ft;
      return true;
    }
    return false;
  };

  // A zero coefficient row is a fixed point of the surrogate ridge, so rows
  // whose unpenalized gradient score exceeds lambda are pushed off zero by a
  // direct backtracking search on the exact (nondifferentiable) objective.
  auto activate_rows = [&](double& cur) {
    Eigen::VectorXd gc, gb;
    speus_objective(sp, fo, zc, &gc);
    binary_nll(problem, data, zb, &gb);
    double max_norm = 1.0;
    for (int k = 0; k < p; ++k) max_norm = std::max(max_norm, row_norm(k));
    bool any = false;
    for (int k = 0; k < p; ++k) {
      if (row_norm(k) > 1e-6 * max_norm) continue;
      const double score = std::hypot(gc[k] / data.col_scale_x[k],
                                      gb[k] / data.col_scale_z[k]);
      if (score <= lambda * (1.0 + 1e-6)) continue;
      const double step_c =
          -gc[k] / (data.col_scale_x[k] * data.col_scale_x[k]);
      const double step_b =
          -gb[k] / (data.col_scale_z[k] * data.col_scale_z[k]);
      double t = 1.0;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        Eigen::VectorXd zc_try = zc;
        Eigen::VectorXd zb_try = zb;
        zc_try[k] += t * step_c;
        zb_try[k] += t * step_b;
        const double ft = true_objective(zc_try, zb_try);
        if (std::isfinite(ft) && ft < cur - 1e-12 * (1.0 + std::fabs(cur))) {
          zc = std::move(zc_try);
          zb = std::move(zb_try);
          cur = ft;
          any = true;
          break;
        }
      }
    }
    return any;
  };

  double prev = true_objective(zc, zb);
  fit.objective_trace.push_back(prev);
  // A row held at the 1e-8 majorizer floor can defeat the majorization by
  // at most lambda * floor / 2, so the descent guard allows exactly that.
  const double floor_defect = 0.5 * lambda * 1e-8 * p;
  int basin_refreshes = 0;

  Eigen::VectorXd inv_a(p);
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    fit.outer_iters = outer + 1;
    // Refresh the majorizer weights at the current point.
    for (int k = 0; k < p; ++k)
      inv_a[k] = 1.0 / std::max(row_norm(k), 1e-8);

    // Both blocks are minimized in penalty-scaled coordinates
    // (c_k * coefficient), which makes the fit equivariant under column
    // rescaling and evens out the inner conditioning.
    auto block_c = [&](const Eigen::VectorXd& zt, Eigen::VectorXd* g) {
      Eigen::VectorXd z = zt;
      z.head(p).array() /= data.col_scale_x.array();
      double f = speus_objective(sp, fo, z, g);
      if (!std::isfinite(f)) return f;
      if (g) g->head(p).array() /= data.col_scale_x.array();
      for (int k = 0; k < p; ++k) {
        const double w = lambda * inv_a[k];
        f += 0.5 * w * zt[k] * zt[k];
        if (g) (*g)[k] += w * zt[k];
      }
      return f;
    };
    Eigen::VectorXd zct = zc;
    zct.head(p).array() *= data.col_scale_x.array();
    zct = minimize_bfgs(block_c, zct, opts.optim).x;
    zc = zct;
    zc.head(p).array() /= data.col_scale_x.array();

    auto block_b = [&](const Eigen::VectorXd& zt, Eigen::VectorXd* g) {
      Eigen::VectorXd z = zt;
      z.head(p).array() /= data.col_scale_z.array();
      double f = binary_nll(problem, data, z, g);
      if (g) g->head(p).array() /= data.col_scale_z.array();
      for (int k = 0; k < p; ++k) {
        const double w = lambda * inv_a[k];
        f += 0.5 * w * zt[k] * zt[k];
        if (g) (*g)[k] += w * zt[k];
      }
      return f;
    };
    Eigen::VectorXd zbt = zb;
    zbt.head(p).array() *= data.col_scale_z.array();
    zbt = minimize_bfgs(block_b, zbt, opts.optim).x;
    zb = zbt;
    zb.head(p).array() /= data.col_scale_z.array();

    double cur = true_objective(zc, zb);
    snap_tiny_rows(cur);
    fit.objective_trace.push_back(cur);
    if (cur > prev + 1e-10 * (1.0 + std::fabs(prev)) + floor_defect)
      throw std::logic_error(
          "s2_fit: majorize-minimize outer step increased the objective");
    const bool stalled =
        std::fabs(prev - cur) <= opts.outer_tol * (1.0 + std::fabs(cur));
    if (stalled) {
      snap_tiny_rows(cur);
      polish(cur);
      snap_tiny_rows(cur);
      fit.objective_trace.push_back(cur);
      if (lambda > 0.0 && activate_rows(cur)) {
        fit.objective_trace.push_back(cur);
        prev = cur;
        continue;
      }
      if (basin_refreshes < 3 && refresh_skew_basin(cur)) {
        ++basin_refreshes;
        fit.objective_trace.push_back(cur);
        prev = cur;
        continue;
      }
      prev = cur;
      fit.converged = true;
      break;
    }
    prev = cur;
  }

  TwoPartParams out;
  unpack_continuous(zc, &out);
  fit.beta = out.beta;
  fit.alpha = out.alpha;
  fit.skew = out.skew;
  fit.b = zb.head(p);
  fit.b0 = zb[p];
  fit.objective = prev;

  double max_norm = 0.0;
  Eigen::VectorXd norms(p);
  for (int k = 0; k < p; ++k) {
    norms[k] = std::hypot(data.col_scale_x[k] * fit.beta[k],
                          data.col_scale_z[k] * fit.b[k]);
    max_norm = std::max(max_norm, norms[k]);
  }
  for (int k = 0; k < p; ++k)
    if (max_norm > 0.0 && norms[k] > 1e-6 * max_norm) fit.support.push_back(k);
  if (!fit.converged)
    fit.warnings.push_back("outer loop hit the iteration limit");
  return fit;
}

std::vector<TwoPartFit> s2_path(const TwoPartProblem& problem, int n_lambda,
                                const S2Options& opts) {
  if (n_lambda < 2)
    throw std::invalid_argument("s2_path: need at least 2 path points");
  const double lam_hi = lambda_max(problem);
  std::vector<TwoPartFit> fits;
  fits.reserve(n_lambda);
  S2Options cur = opts;
  for (int t = 0; t < n_lambda; ++t) {
    const double frac = static_cast<double>(t) / (n_lambda - 1);
    const double lam = lam_hi * std::pow(1e-3, frac);
    TwoPartFit fit = s2_fit(problem, lam, cur);
    if (!fits.empty() && fit.support.size() < fits.back().support.size()) {
      std::ostringstream os;
      os << "support shrank from " << fits.back().support.size() << " to "
         << fit.support.size() << " while lambda decreased";
      fit.warnings.push_back(os.str());
    }
    cur.has_warm = true;
    cur.warm.beta = fit.beta;
    cur.warm.alpha = fit.alpha;
    cur.warm.b = fit.b;
    cur.warm.b0 = fit.b0;
    cur.warm.skew = fit.skew;
    fits.push_back(std::move(fit));
  }
  return fits;
}

namespace {

// Row-subset problem sharing transform/base/tau settings.
TwoPartProblem subset_problem(const TwoPartProblem& problem,
                              const std::vector<int>& rows) {
  TwoPartProblem out;
  out.x.resize(static_cast<int>(rows.size()), problem.x.cols());
  out.y.resize(static_cast<int>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.x.row(static_cast<int>(r)) = problem.x.row(rows[r]);
    out.y[static_cast<int>(r)] = problem.y[rows[r]];
  }
  out.transform = problem.transform;
  out.base = problem.base;
  out.tau = problem.tau;
  out.column_normalize = problem.column_normalize;
  return out;
}

TwoPartProblem column_subset(const TwoPartProblem& problem,
                             const std::vector<int>& cols) {
  TwoPartProblem out = problem;
  out.x.resize(problem.x.rows(), static_cast<int>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    out.x.col(static_cast<int>(c)) = problem.x.col(cols[c]);
  return out;
}

// Validation negative log-likelihood (no penalties) of a support-restricted
// parameter set on held-out rows.
double validation_nll(const TwoPartProblem& val,
                      const TwoPartParams& sub_params,
                      const BaseDensity& base) {
  TwoPartData data = two_part_partition(val);
  const int p_sub = static_cast<int>(val.x.cols());
  double nll = 0.0;
  const SkewSpec& sk = sub_params.skew;
  const double q = base.cdf(sk.m);
  const double zn = sk.sigma * q + sk.nu * (1.0 - q);
  Eigen::VectorXd rc = data.ty;
  if (p_sub > 0) rc -= data.x_pos.leftCols(p_sub) * sub_params.beta;
  rc.array() -= sub_params.alpha;
  for (int r = 0; r < rc.size(); ++r) {
    const double sc = rc[r] <= sk.m ? sk.sigma : sk.nu;
    const double u = (rc[r] - sk.m) / sc + sk.m;
    nll += base.loss(u) + std::log(zn);
  }
  Eigen::VectorXd etab(val.y.size());
  etab.setConstant(sub_params.b0);
  if (p_sub > 0) etab += val.x.leftCols(p_sub) * sub_params.b;
  for (int i = 0; i < etab.size(); ++i)
    nll += log1pexp(etab[i]) - data.zero_flag[i] * etab[i];
  return nll;
}

}  // namespace

ScvResult select_lambda_scv(const TwoPartProblem& problem, int folds,
                            int n_lambda, std::uint64_t seed,
                            const S2Options& opts) {
  if (folds < 2)
    throw std::invalid_argument("select_lambda_scv: need at least 2 folds");
  TwoPartData data = two_part_partition(problem);
  if (data.n_pos < folds || data.n_zero < folds)
    throw std::invalid_argument(
        "select_lambda_scv: cannot stratify, a fold would lack zeros or "
        "positives");

  // Stratified fold labels: shuffle zeros and positives separately, deal
  // round-robin.  Identical rows (bootstrap-resample duplicates) stay in a
  // single fold, otherwise validation rows would be literal copies of
  // training rows and the score would reward memorizing noise columns.
  const int n_rows = static_cast<int>(problem.y.size());
  std::vector<int> fold_of(n_rows, -1);
  CounterRng rng(seed);
  auto group_rows = [&](const std::vector<int>& idx) {
    std::map<std::vector<double>, int> seen;
    std::vector<std::vector<int>> groups;
    for (int i : idx) {
      std::vector<double> key(problem.x.cols() + 1);
      key[0] = problem.y[i];
      for (int j = 0; j < problem.x.cols(); ++j) key[j + 1] = problem.x(i, j);
      auto [it, fresh] = seen.emplace(std::move(key),
                                      static_cast<int>(groups.size()));
      if (fresh) groups.emplace_back();
      groups[it->second].push_back(i);
    }
    return groups;
  };
  auto deal = [&](std::vector<std::vector<int>> groups) {
    for (std::size_t i = groups.size(); i > 1; --i)
      std::swap(groups[i - 1], groups[rng.uniform_index(i)]);
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (int i : groups[g]) fold_of[i] = static_cast<int>(g % folds);
  };
  std::vector<int> zeros, positives;
  for (int i = 0; i < n_rows; ++i)
    (problem.y[i] == 0.0 ? zeros : positives).push_back(i);
  auto zero_groups = group_rows(zeros);
  auto pos_groups = group_rows(positives);
  if (static_cast<int>(zero_groups.size()) < folds ||
      static_cast<int>(pos_groups.size()) < folds)
    throw std::invalid_argument(
        "select_lambda_scv: cannot stratify, too few distinct zero or "
        "positive rows for the requested folds");
  deal(std::move(zero_groups));
  deal(std::move(pos_groups));

  std::vector<TwoPartFit> full_path = s2_path(problem, n_lambda, opts);
  ScvResult res;
  res.lambda_grid.resize(n_lambda);
  for (int t = 0; t < n_lambda; ++t) res.lambda_grid[t] = full_path[t].lambda;
  res.cv_table.resize(folds, n_lambda);

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows, val_rows;
    for (int i = 0; i < n_rows; ++i)
      (fold_of[i] == f ? val_rows : train_rows).push_back(i);
    TwoPartProblem train = subset_problem(problem, train_rows);
    TwoPartProblem val = subset_problem(problem, val_rows);

    S2Options cur = opts;
    for (int t = 0; t < n_lambda; ++t) {
      TwoPartFit fit = s2_fit(train, res.lambda_grid[t], cur);
      cur.has_warm = true;
      cur.warm.beta = fit.beta;
      cur.warm.alpha = fit.alpha;
      cur.warm.b = fit.b;
      cur.warm.b0 = fit.b0;
      cur.warm.skew = fit.skew;

      // Refit the selected support without the penalty, then score.
      TwoPartProblem train_sub = column_subset(train, fit.support);
      S2Options warm_sub = opts;
      warm_sub.has_warm = true;
      warm_sub.warm.beta.resize(fit.support.size());
      warm_sub.warm.b.resize(fit.support.size());
      for (std::size_t c = 0; c < fit.support.size(); ++c) {
        warm_sub.warm.beta[static_cast<int>(c)] = fit.beta[fit.support[c]];
        warm_sub.warm.b[static_cast<int>(c)] = fit.b[fit.support[c]];
      }
      warm_sub.warm.alpha = fit.alpha;
      warm_sub.warm.b0 = fit.b0;
      warm_sub.warm.skew = fit.skew;
      TwoPartFit refit = s2_fit(train_sub, 0.0, warm_sub);

      TwoPartParams sub_params;
      sub_params.beta = refit.beta;
      sub_params.alpha = refit.alpha;
      sub_params.b = refit.b;
      sub_params.b0 = refit.b0;
      sub_params.skew = refit.skew;
      TwoPartProblem val_sub = column_subset(val, fit.support);
      res.cv_table(f, t) = validation_nll(val_sub, sub_params, problem.base);
    }
  }

  Eigen::VectorXd mean = res.cv_table.colwise().mean();
  int best = 0;
  for (int t = 1; t < n_lambda; ++t)
    if (mean[t] < mean[best]) best = t;
  res.lambda_min = res.lambda_grid[best];
  double sd = std::sqrt(
      (res.cv_table.col(best).array() - mean[best]).square().sum() /
      std::max(1, folds - 1));
  const double se = sd / std::sqrt(static_cast<double>(folds));
  int pick = best;
  for (int t = 0; t <= best; ++t) {
    if (mean[t] <= mean[best] + se) {
      pick = t;
      break;
    }
  }
  res.lambda_1se = res.lambda_grid[pick];
  // The selected model uses the one-standard-error rule: validation loss is
  // flat past the signal, so the bare minimizer habitually drags in noise
  // rows, while the largest lambda within one SE keeps the support honest.
  res.fit = full_path[pick];
  return res;
}

EffectiveNoise effective_noise(const TwoPartProblem& problem,
                               const TwoPartParams& params) {
  TwoPartData data = two_part_partition(problem);
  const int n = data.n_pos;
  const int n_rows = static_cast<int>(problem.y.size());
  const BaseDensity& base = problem.base;
  const SkewSpec& sk = params.skew;
  const double q = base.cdf(sk.m);
  const double zn = sk.sigma * q + sk.nu * (1.0 - q);
  const double phi_m = base.pdf(sk.m);

  EffectiveNoise out;
  out.eps_eta.resize(n + n_rows);
  out.eps_m.resize(n);
  out.eps_sigma_nu.resize(2 * n);
  out.bound_sigma_nu.resize(2 * n);

  Eigen::VectorXd raw = data.ty - data.x_pos * params.beta;
  raw.array() -= params.alpha + sk.m;

  for (int i = 0; i < n; ++i) {
    const bool left = raw[i] <= 0.0;
    const double eps_minus = raw[i] / sk.sigma + sk.m;
    const double eps_plus = raw[i] / sk.nu + sk.m;
    const double rho_l = left ? base.dloss(eps_minus) : 0.0;
    const double rho_r = left ? 0.0 : base.dloss(eps_plus);
    out.eps_eta[i] = rho_l / sk.sigma + rho_r / sk.nu;
    out.eps_m[i] = (1.0 / sk.sigma - 1.0) * rho_l +
                   (1.0 / sk.nu - 1.0) * rho_r +
                   phi_m * (sk.nu - sk.sigma) / zn;
    out.eps_sigma_nu[i] = -raw[i] * rho_l + sk.sigma * sk.sigma * q / zn;
    out.eps_sigma_nu[n + i] =
        -raw[i] * rho_r + sk.nu * sk.nu * (1.0 - q) / zn;
  }

  Eigen::VectorXd etab = problem.x * params.b;
  etab.array() += params.b0;
  for (int i = 0; i < n_rows; ++i)
    out.eps_eta[n + i] = data.zero_flag[i] - sigmoid(etab[i]);

  if (base.kind() == BaseKind::HuberPseudo) {
    const double m_bound = base.param0();
    const double smin = std::min(sk.sigma, sk.nu);
    const double smax = std::max(sk.sigma, sk.nu);
    out.bounds_available = true;
    out.rho_bound = m_bound;
    out.logistic_bound = 1.0;
    out.bound_eta = m_bound / smin + 1.0;
    out.bound_m = std::max(std::fabs(1.0 - 1.0 / sk.sigma),
                           std::fabs(1.0 - 1.0 / sk.nu)) *
                      m_bound +
                  std::fabs(sk.sigma - sk.nu) / smin;
    for (int i = 0; i < n; ++i) {
      const double bi = m_bound * std::fabs(raw[i]) + smax;
      out.bound_sigma_nu[i] = bi;
      out.bound_sigma_nu[n + i] = bi;
    }
  } else {
    out.bound_eta = kInf;
    out.bound_m = kInf;
    out.bound_sigma_nu.setConstant(kInf);
  }
  return out;
}

double lambda_theory(const TwoPartProblem& problem, const SkewSpec& skew,
                     double q, double a_const, double omega) {
  const int p = static_cast<int>(problem.x.cols());
  if (p < 2) throw std::invalid_argument("lambda_theory: need p >= 2");
  if (!(q > 0.0) || !(a_const > 0.0))
    throw std::invalid_argument("lambda_theory: q and A must be positive");
  double w = omega;
  if (!(w > 0.0)) {
    if (problem.base.kind() != BaseKind::HuberPseudo)
      throw std::invalid_argument(
          "lambda_theory: automatic omega needs a bounded loss derivative "
          "(Huber pseudo-density base)");
    w = problem.base.param0() / std::min(skew.sigma, skew.nu) + 1.0;
  }
  return a_const * w * std::pow(std::log(static_cast<double>(p)), 1.0 / q);
}

}  // namespace pivotblend
