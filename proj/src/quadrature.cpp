#include "pivotblend/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

namespace pivotblend {

namespace {

// 15-point Kronrod abscissae/weights with the embedded 7-point Gauss rule
// (QUADPACK values, positive half; the rule is symmetric).
const double kXgk[8] = {0.991455371120813, 0.949107912342759,
                        0.864864423359769, 0.741531185599394,
                        0.586087235467691, 0.405845151377397,
                        0.207784955007898, 0.000000000000000};
const double kWgk[8] = {0.022935322010529, 0.063092092629979,
                        0.104790010322250, 0.140653259715525,
                        0.169004726639267, 0.190350578064785,
                        0.204432940075298, 0.209482141084728};
const double kWg[4] = {0.129484966168870, 0.279705391489277,
                       0.381830050505119, 0.417959183673469};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

Segment eval_segment(const std::function<double(double)>& f, double a,
                     double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fc = f(c);
  double res_g = fc * kWg[3];
  double res_k = fc * kWgk[7];
  for (int j = 0; j < 7; ++j) {
    double x = h * kXgk[j];
    double f1 = f(c - x);
    double f2 = f(c + x);
    res_k += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) res_g += kWg[j / 2] * (f1 + f2);
  }
  Segment s;
  s.a = a;
  s.b = b;
  s.value = res_k * h;
  // Conservative estimate: the raw Kronrod-Gauss difference.
  s.error = std::fabs((res_k - res_g) * h);
  return s;
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, double abs_tol, double rel_tol,
                           int max_subdiv) {
  QuadratureResult out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  std::priority_queue<Segment> heap;
  heap.push(eval_segment(f, a, b));
  double total = heap.top().value;
  double total_err = heap.top().error;
  int n = 0;
  while (total_err > std::max(abs_tol, rel_tol * std::fabs(total)) &&
         n < max_subdiv) {
    Segment worst = heap.top();
    heap.pop();
    double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {  // interval at double resolution
      heap.push(worst);
      break;
    }
    Segment left = eval_segment(f, worst.a, mid);
    Segment right = eval_segment(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++n;
  }
  out.value = sign * total;
  out.abs_error = total_err;
  out.subdivisions = n;
  out.converged =
      total_err <= std::max(abs_tol, rel_tol * std::fabs(total)) * 1.000001;
  return out;
}

QuadratureResult integrate_segmented(const std::function<double(double)>& f,
                                     const std::vector<double>& points,
                                     double abs_tol, double rel_tol,
                                     int max_subdiv) {
  QuadratureResult out;
  out.converged = true;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (!(points[i + 1] > points[i])) continue;
    QuadratureResult r = integrate(f, points[i], points[i + 1], abs_tol,
                                   rel_tol, max_subdiv);
    out.value += r.value;
    out.abs_error += r.abs_error;
    out.subdivisions += r.subdivisions;
    out.converged = out.converged && r.converged;
  }
  return out;
}

void truncation_bounds(const std::function<double(double)>& f, double center,
                       double* a, double* b, double lower_support,
                       double upper_support) {
  // Peak proxy: the larger of f at the center and one unit to each side.
  double peak = std::max({f(center), f(center - 1.0), f(center + 1.0), 1e-300});
  const double thresh = peak * 1e-16;
  // Both the candidate and the midpoint back to the previous probe must be
  // below threshold, so an isolated zero of f cannot stop the expansion.
  auto expand = [&](double dir, double support_edge) {
    double prev = center;
    double step = 1.0;
    for (;;) {
      double cand = center + dir * step;
      if ((dir < 0 && cand <= support_edge) ||
          (dir > 0 && cand >= support_edge))
        return support_edge;
      if (f(cand) < thresh && f(0.5 * (cand + prev)) < thresh) return cand;
      prev = cand;
      step *= 2.0;
      if (step > 1e9) return cand;
    }
  };
  *a = expand(-1.0, lower_support);
  *b = expand(+1.0, upper_support);
}

}  // namespace pivotblend
