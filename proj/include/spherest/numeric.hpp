#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <utility>

namespace spherest::numeric {

inline double normal_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

inline double normal_pdf(double x, double mean, double sd) {
  return normal_pdf((x - mean) / sd) / sd;
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

/// Normal c.d.f. with location/scale; sd == 0 degenerates to a unit step.
inline double normal_cdf(double x, double mean, double sd) {
  if (sd == 0.0) return x >= mean ? 1.0 : 0.0;
  return normal_cdf((x - mean) / sd);
}

/// Inverse of the standard normal c.d.f. (Wichura's algorithm AS 241).
double normal_quantile(double p);

/// Regularized lower incomplete gamma function P(a, x).
double gamma_p(double a, double x);

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
inline double chi_square_sf(double x, double dof) {
  return 1.0 - gamma_p(0.5 * dof, 0.5 * x);
}

namespace detail {
// Gauss-Kronrod 7-15 nodes on [0,1] scale factors; defined in numeric.cpp.
struct Gk15Rule {
  double nodes[15];
  double kronrod_weights[15];
  double gauss_weights[15];
};
extern const Gk15Rule kGk15;
}  // namespace detail

/// Adaptive Gauss-Kronrod (7-15) quadrature to absolute tolerance.
/// Integrand may be any callable double -> double.
template <class F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-10,
                 int max_depth = 40) {
  struct Panel {
    double a, b;
    int depth;
  };
  auto panel_value = [&f](double lo, double hi, double& err) {
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    double kronrod = 0.0, gauss = 0.0;
    for (int i = 0; i < 15; ++i) {
      const double v = f(mid + half * detail::kGk15.nodes[i]);
      kronrod += detail::kGk15.kronrod_weights[i] * v;
      gauss += detail::kGk15.gauss_weights[i] * v;
    }
    kronrod *= half;
    gauss *= half;
    err = std::abs(kronrod - gauss);
    return kronrod;
  };

  double total = 0.0;
  // Explicit stack; tolerance is split over the current panel's width share.
  Panel stack[128];
  int top = 0;
  stack[top++] = {a, b, 0};
  const double width = std::abs(b - a);
  while (top > 0) {
    const Panel p = stack[--top];
    double err;
    const double val = panel_value(p.a, p.b, err);
    const double share = width > 0 ? std::abs(p.b - p.a) / width : 1.0;
    if (err <= abs_tol * share || p.depth >= max_depth || top >= 126) {
      total += val;
    } else {
      const double mid = 0.5 * (p.a + p.b);
      stack[top++] = {p.a, mid, p.depth + 1};
      stack[top++] = {mid, p.b, p.depth + 1};
    }
  }
  return total;
}

struct ScalarMinResult {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
};

/// Brent minimization on [lo, hi]; assumes f finite on the bracket.
ScalarMinResult brent_minimize(const std::function<double(double)>& f,
                               double lo, double hi, double x_tol = 1e-10,
                               int max_iter = 200);

/// Coarse grid scan followed by Brent polish; robust to plateaus and
/// -inf sentinels outside the interesting region.
ScalarMinResult grid_brent_minimize(const std::function<double(double)>& f,
                                    double lo, double hi, int grid_points = 64,
                                    double x_tol = 1e-10);

struct SimplexResult {
  Eigen::VectorXd x;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct SimplexOptions {
  double initial_step = 0.1;
  double f_tol = 1e-10;
  int max_iter = 4000;
  int restarts = 1;
};

/// Nelder-Mead simplex minimization.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x0,
                          const SimplexOptions& opts = {});

}  // namespace spherest::numeric
