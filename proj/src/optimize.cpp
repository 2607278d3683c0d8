#include "pivotblend/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pivotblend {

OptimResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                          const OptimOptions& opts) {
  const int d = static_cast<int>(x0.size());
  OptimResult res;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd g(d);
  double fx = f(x, &g);
  if (!std::isfinite(fx))
    throw std::invalid_argument("minimize_bfgs: objective not finite at x0");

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
  bool h_is_identity = true;
  const double c1 = 1e-4;

  for (int it = 0; it < opts.max_iters; ++it) {
    res.iters = it + 1;
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      res.note = "gradient below tolerance";
      break;
    }
    Eigen::VectorXd dir = -(h * g);
    double slope = dir.dot(g);
    if (!(slope < 0.0)) {  // stale curvature; restart from steepest descent
      h.setIdentity();
      h_is_identity = true;
      dir = -g;
      slope = dir.dot(g);
    }

    double t = 1.0;
    double ft = 0.0;
    Eigen::VectorXd xt;
    bool accepted = false;
    int backtracks = 0;
    for (int ls = 0; ls < 60; ++ls) {
      xt = x + t * dir;
      ft = f(xt, nullptr);
      if (std::isfinite(ft) && ft <= fx + c1 * t * slope) {
        accepted = true;
        backtracks = ls;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!h_is_identity) {  // retry once along steepest descent
        h.setIdentity();
        h_is_identity = true;
        continue;
      }
      res.converged = g.lpNorm<Eigen::Infinity>() < 1e2 * opts.grad_tol;
      res.note = "line search stalled";
      break;
    }
    // Hard support walls (+inf regions) can shrink the accepted step to
    // 2^-50 of the trial direction.  Such micro-steps carry no curvature
    // information; drop the pair and restart from steepest descent rather
    // than letting the objective-change test read the stall as convergence.
    if (backtracks >= 50) {
      if (h_is_identity) {
        res.converged = false;
        res.note = "step collapsed at a support boundary";
        x = xt;
        fx = ft;
        f(x, &g);
        break;
      }
      h.setIdentity();
      h_is_identity = true;
      x = xt;
      fx = ft;
      f(x, &g);
      continue;
    }

    Eigen::VectorXd gt(d);
    double ft2 = f(xt, &gt);
    (void)ft2;
    Eigen::VectorXd s = xt - x;
    Eigen::VectorXd yv = gt - g;
    double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm() && std::isfinite(sy)) {
      if (h_is_identity) {
        // Scale the initial inverse Hessian to the first curvature pair.
        h *= sy / yv.squaredNorm();
        h_is_identity = false;
      }
      double rho = 1.0 / sy;
      Eigen::VectorXd hy = h * yv;
      // Inverse BFGS update: H += (sy + y'Hy) rho^2 s s' - rho (Hy s' + s y'H).
      h.noalias() += (sy + yv.dot(hy)) * (rho * rho) * (s * s.transpose());
      h.noalias() -= rho * (hy * s.transpose() + s * hy.transpose());
    }

    double df = std::fabs(fx - ft);
    x = xt;
    fx = ft;
    g = gt;
    // A tiny objective change only signals convergence when the step was
    // healthy; heavily backtracked steps near a wall also change f little.
    if (df <= opts.obj_tol * std::max(1.0, std::fabs(fx)) && backtracks <= 2) {
      res.converged = true;
      res.note = "objective change below tolerance";
      break;
    }
  }
  if (res.note.empty()) res.note = "iteration limit";
  res.x = x;
  res.value = fx;
  res.grad = g;
  return res;
}

OptimResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                             const SimplexOptions& opts) {
  const int d = static_cast<int>(x0.size());
  auto eval = [&](const Eigen::VectorXd& x) {
    double v = f(x, nullptr);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  OptimResult res;
  int evals = 0;

  if (!std::isfinite(eval(x0)))
    throw std::invalid_argument("minimize_simplex: objective not finite at x0");

  Eigen::VectorXd best_x = x0;
  double best_f = eval(x0);
  evals += 2;

  for (int round = 0; round <= opts.restarts; ++round) {
    // Fresh axis-aligned simplex around the current best vertex.
    std::vector<Eigen::VectorXd> xs(d + 1, best_x);
    std::vector<double> fs(d + 1);
    fs[0] = best_f;
    const double step = opts.init_step / (round == 0 ? 1.0 : 10.0);
    for (int j = 0; j < d; ++j) {
      xs[j + 1][j] += step * std::max(1.0, std::fabs(best_x[j]));
      fs[j + 1] = eval(xs[j + 1]);
      ++evals;
    }

    bool settled = false;
    while (evals < opts.max_evals) {
      // Order vertices best-to-worst (infinities last).
      std::vector<int> ord(d + 1);
      for (int i = 0; i <= d; ++i) ord[i] = i;
      std::sort(ord.begin(), ord.end(),
                [&](int a, int b) { return fs[a] < fs[b]; });
      {
        std::vector<Eigen::VectorXd> xs2(d + 1);
        std::vector<double> fs2(d + 1);
        for (int i = 0; i <= d; ++i) {
          xs2[i] = xs[ord[i]];
          fs2[i] = fs[ord[i]];
        }
        xs.swap(xs2);
        fs.swap(fs2);
      }

      double diam = 0.0;
      for (int i = 1; i <= d; ++i)
        diam = std::max(diam, (xs[i] - xs[0]).lpNorm<Eigen::Infinity>());
      const double fspread = fs[d] - fs[0];
      if (std::isfinite(fs[d]) &&
          fspread <= opts.f_tol_rel * std::max(1.0, std::fabs(fs[0])) &&
          diam <= opts.x_tol * std::max(1.0, xs[0].lpNorm<Eigen::Infinity>())) {
        settled = true;
        break;
      }

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
      for (int i = 0; i < d; ++i) centroid += xs[i];
      centroid /= static_cast<double>(d);

      const Eigen::VectorXd xr = centroid + (centroid - xs[d]);
      const double fr = eval(xr);
      ++evals;
      if (fr < fs[0]) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[d]);
        const double fe = eval(xe);
        ++evals;
        if (fe < fr) {
          xs[d] = xe;
          fs[d] = fe;
        } else {
          xs[d] = xr;
          fs[d] = fr;
        }
      } else if (fr < fs[d - 1]) {
        xs[d] = xr;
        fs[d] = fr;
      } else {
        bool shrink = true;
        if (fr < fs[d]) {  // outside contraction
          const Eigen::VectorXd xc = centroid + 0.5 * (xr - centroid);
          const double fc = eval(xc);
          ++evals;
          if (fc <= fr) {
            xs[d] = xc;
            fs[d] = fc;
            shrink = false;
          }
        } else {  // inside contraction
          const Eigen::VectorXd xc = centroid - 0.5 * (centroid - xs[d]);
          const double fc = eval(xc);
          ++evals;
          if (fc < fs[d]) {
            xs[d] = xc;
            fs[d] = fc;
            shrink = false;
          }
        }
        if (shrink) {
          for (int i = 1; i <= d; ++i) {
            xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
            fs[i] = eval(xs[i]);
            ++evals;
          }
        }
      }
    }

    int arg = 0;
    for (int i = 1; i <= d; ++i)
      if (fs[i] < fs[arg]) arg = i;
    if (fs[arg] < best_f) {
      best_f = fs[arg];
      best_x = xs[arg];
    }
    res.converged = settled;
  }

  res.x = best_x;
  res.value = best_f;
  res.iters = evals;
  res.note = res.converged ? "simplex settled" : "simplex evaluation budget";
  res.grad.resize(0);
  return res;
}

Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (int i = 0; i < x.size(); ++i) {
    double step = h * std::max(1.0, std::fabs(x[i]));
    xp[i] = x[i] + step;
    double fp = f(xp);
    xp[i] = x[i] - step;
    double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace pivotblend
