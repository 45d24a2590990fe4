#include "spherest/numeric.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace spherest::numeric {

double normal_quantile(double p) {
  // AS 241, PPND16: rational approximations accurate to ~1e-16.
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

namespace {

double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
  // Lentz continued fraction for Q(a,x).
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0)
    throw std::invalid_argument("gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule, nodes symmetric.
const Gk15Rule kGk15 = {
    {-0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
     -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
     -0.586087235467691130294144838258730, -0.405845151377397166906606412076961,
     -0.207784955007898467600689403773245, 0.0,
     0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
     0.586087235467691130294144838258730, 0.741531185599394439863864773280788,
     0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
     0.991455371120812639206854697526329},
    {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
     0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
     0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
     0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
     0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
     0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
     0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
     0.022935322010529224963732008058970},
    {0.0, 0.129484966168869693270611432679082, 0.0,
     0.279705391489276667901467771423780, 0.0,
     0.381830050505118944950369775488975, 0.0,
     0.417959183673469387755102040816327, 0.0,
     0.381830050505118944950369775488975, 0.0,
     0.279705391489276667901467771423780, 0.0,
     0.129484966168869693270611432679082, 0.0}};

}  // namespace detail

ScalarMinResult brent_minimize(const std::function<double(double)>& f,
                               double lo, double hi, double x_tol,
                               int max_iter) {
  const double golden = 0.3819660112501051;
  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  int evals = 1;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol = x_tol * std::abs(x) + 1e-15;
    if (std::abs(x - m) <= 2.0 * tol - 0.5 * (b - a)) break;
    double p = 0.0, q = 0.0, r = 0.0;
    bool use_golden = true;
    if (std::abs(e) > tol) {
      r = (x - w) * (fx - fv);
      q = (x - v) * (fx - fw);
      p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) &&
          p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < 2.0 * tol || b - u < 2.0 * tol)
          d = m > x ? tol : -tol;
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x < m ? b : a) - x;
      d = golden * e;
    }
    const double u = x + (std::abs(d) >= tol ? d : (d > 0 ? tol : -tol));
    const double fu = f(u);
    ++evals;
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return {x, fx, evals};
}

ScalarMinResult grid_brent_minimize(const std::function<double(double)>& f,
                                    double lo, double hi, int grid_points,
                                    double x_tol) {
  if (grid_points < 3) grid_points = 3;
  int best = 0;
  double best_f = std::numeric_limits<double>::infinity();
  const double step = (hi - lo) / (grid_points - 1);
  for (int i = 0; i < grid_points; ++i) {
    const double v = f(lo + i * step);
    if (v < best_f) {
      best_f = v;
      best = i;
    }
  }
  const double a = lo + std::max(0, best - 1) * step;
  const double b = lo + std::min(grid_points - 1, best + 1) * step;
  ScalarMinResult res = brent_minimize(f, a, b, x_tol);
  if (best_f < res.fx) {
    res.x = lo + best * step;
    res.fx = best_f;
  }
  res.evaluations += grid_points;
  return res;
}

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x0, const SimplexOptions& opts) {
  const int n = static_cast<int>(x0.size());
  SimplexResult out;
  out.x = x0;
  out.fx = f(x0);

  auto run = [&](const Eigen::VectorXd& start, double start_f, int budget) {
    std::vector<Eigen::VectorXd> pts(n + 1, start);
    std::vector<double> vals(n + 1, start_f);
    for (int i = 0; i < n; ++i) {
      pts[i + 1](i) += opts.initial_step;
      vals[i + 1] = f(pts[i + 1]);
    }
    int iter = 0;
    for (; iter < budget; ++iter) {
      // order
      std::vector<int> idx(n + 1);
      for (int i = 0; i <= n; ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(),
                [&](int a, int b) { return vals[a] < vals[b]; });
      std::vector<Eigen::VectorXd> spts(n + 1);
      std::vector<double> svals(n + 1);
      for (int i = 0; i <= n; ++i) {
        spts[i] = pts[idx[i]];
        svals[i] = vals[idx[i]];
      }
      pts.swap(spts);
      vals.swap(svals);
      if (std::abs(vals[n] - vals[0]) <=
          opts.f_tol * (std::abs(vals[0]) + std::abs(vals[n]) + 1e-12))
        break;

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i) centroid += pts[i];
      centroid /= n;

      const Eigen::VectorXd reflected = centroid + (centroid - pts[n]);
      const double fr = f(reflected);
      if (fr < vals[0]) {
        const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[n]);
        const double fe = f(expanded);
        if (fe < fr) {
          pts[n] = expanded; vals[n] = fe;
        } else {
          pts[n] = reflected; vals[n] = fr;
        }
      } else if (fr < vals[n - 1]) {
        pts[n] = reflected; vals[n] = fr;
      } else {
        const Eigen::VectorXd contracted = centroid + 0.5 * (pts[n] - centroid);
        const double fc = f(contracted);
        if (fc < vals[n]) {
          pts[n] = contracted; vals[n] = fc;
        } else {
          for (int i = 1; i <= n; ++i) {
            pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
            vals[i] = f(pts[i]);
          }
        }
      }
    }
    if (vals[0] < out.fx) {
      out.x = pts[0];
      out.fx = vals[0];
    }
    out.iterations += iter;
    return iter < budget;
  };

  bool converged = run(out.x, out.fx, opts.max_iter);
  for (int r = 0; r < opts.restarts; ++r)
    converged = run(out.x, out.fx, opts.max_iter) && converged;
  out.converged = converged;
  return out;
}

}  // namespace spherest::numeric
