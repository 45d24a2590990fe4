#include "spherest/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spherest/errors.hpp"
#include "spherest/numeric.hpp"

namespace spherest::simulate {

namespace {

constexpr double kPi = std::numbers::pi;

// E[R^k] for R ~ logN(mu, sigma^2).
double lognormal_moment(double mu, double sigma, int k) {
  return std::exp(k * mu + 0.5 * k * k * sigma * sigma);
}

// Minimum of (x - m)^T Q (x - m) over the box, by cyclic coordinate descent
// with clamping; the objective is strictly convex, so the box minimum is
// unique and each sweep is monotone.
double min_quadratic_in_box(const Eigen::Matrix3d& q, const Eigen::Vector3d& m,
                            const BoxWindow& window) {
  const Eigen::Vector3d lo = window.lower();
  const Eigen::Vector3d hi = window.upper();
  Eigen::Vector3d x = m.cwiseMax(lo).cwiseMin(hi);
  double value = (x - m).dot(q * (x - m));
  for (int sweep = 0; sweep < 500; ++sweep) {
    for (int i = 0; i < 3; ++i) {
      double cross = 0.0;
      for (int j = 0; j < 3; ++j)
        if (j != i) cross += q(i, j) * (x(j) - m(j));
      x(i) = std::clamp(m(i) - cross / q(i, i), lo(i), hi(i));
    }
    const double next = (x - m).dot(q * (x - m));
    if (value - next < 1e-14 * (1.0 + value)) {
      value = next;
      break;
    }
    value = next;
  }
  return value;
}

}  // namespace

void BoxWindow::validate() const {
  int zero_edges = 0;
  for (int i = 0; i < 3; ++i) {
    if (!(edges(i) >= 0.0))
      throw std::invalid_argument("BoxWindow: edge lengths must be >= 0");
    if (edges(i) == 0.0) ++zero_edges;
  }
  if (zero_edges > 1 && edges.sum() > 0.0)
    throw std::invalid_argument("BoxWindow: at most one zero edge supported");
}

double BoxWindow::squared_distance(const Eigen::Vector3d& x) const {
  const Eigen::Vector3d lo = lower();
  const Eigen::Vector3d hi = upper();
  double d2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = std::max({0.0, lo(i) - x(i), x(i) - hi(i)});
    d2 += d * d;
  }
  return d2;
}

void ProcessConfig::validate() const {
  if (!(lambda_v > 0.0))
    throw std::invalid_argument("ProcessConfig: lambda_v must be > 0");
  params.validate();
  window.validate();
}

SteinerCoefficients steiner_coefficients(const BoxWindow& window) {
  window.validate();
  const double l1 = window.edges(0), l2 = window.edges(1), l3 = window.edges(2);
  SteinerCoefficients out;
  out.a0 = l1 * l2 * l3;
  out.a1 = 2.0 * (l1 * l2 + l1 * l3 + l2 * l3);
  out.a2 = kPi * (l1 + l2 + l3);
  out.a3 = 4.0 * kPi / 3.0;
  return out;
}

double expected_hit_count(const ProcessConfig& cfg) {
  cfg.validate();
  const SteinerCoefficients st = steiner_coefficients(cfg.window);
  const double coeff[4] = {st.a0, st.a1, st.a2, st.a3};
  double sum = 0.0;
  for (int k = 0; k < 4; ++k)
    sum += coeff[k] * lognormal_moment(cfg.params.mu1, cfg.params.sigma1, k);
  return cfg.lambda_v * sum;
}

Eigen::Vector4d hitting_mixture_weights(const ProcessConfig& cfg) {
  cfg.validate();
  const SteinerCoefficients st = steiner_coefficients(cfg.window);
  const double coeff[4] = {st.a0, st.a1, st.a2, st.a3};
  Eigen::Vector4d w;
  for (int k = 0; k < 4; ++k)
    w(k) = coeff[k] * lognormal_moment(cfg.params.mu1, cfg.params.sigma1, k);
  return w / w.sum();
}

double hitting_radius_pdf(const ProcessConfig& cfg, double r) {
  if (!(r > 0.0)) return 0.0;
  const Eigen::Vector4d w = hitting_mixture_weights(cfg);
  const double sigma = cfg.params.sigma1;
  if (sigma == 0.0)
    throw std::invalid_argument(
        "hitting_radius_pdf: degenerate radius has no density");
  double pdf = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double mu_k = cfg.params.mu1 + k * sigma * sigma;
    pdf += w(k) * numeric::normal_pdf((std::log(r) - mu_k) / sigma) / (sigma * r);
  }
  return pdf;
}

double sample_hitting_radius(const ProcessConfig& cfg, RngStream& rng) {
  const Eigen::Vector4d w = hitting_mixture_weights(cfg);
  const double u = rng.uniform();
  double acc = 0.0;
  int k = 3;
  for (int i = 0; i < 4; ++i) {
    acc += w(i);
    if (u <= acc) {
      k = i;
      break;
    }
  }
  const double sigma = cfg.params.sigma1;
  return rng.lognormal(cfg.params.mu1 + k * sigma * sigma, sigma);
}

Eigen::Vector3d sample_center_given_radius(const BoxWindow& window, double r,
                                           RngStream& rng) {
  if (!(r >= 0.0))
    throw std::invalid_argument("sample_center_given_radius: r must be >= 0");
  const Eigen::Vector3d lo = window.lower() - Eigen::Vector3d::Constant(r);
  const Eigen::Vector3d hi = window.upper() + Eigen::Vector3d::Constant(r);
  const double r2 = r * r;
  for (;;) {
    Eigen::Vector3d x;
    for (int i = 0; i < 3; ++i) x(i) = rng.uniform(lo(i), hi(i));
    if (window.squared_distance(x) <= r2) return x;
  }
}

bool hits_window(const Spheroid& spheroid, const BoxWindow& window) {
  if (window.squared_distance(spheroid.center) > spheroid.a * spheroid.a)
    return false;
  const Eigen::Matrix3d outer = spheroid.axis * spheroid.axis.transpose();
  const Eigen::Matrix3d q =
      outer / (spheroid.a * spheroid.a) +
      (Eigen::Matrix3d::Identity() - outer) / (spheroid.c * spheroid.c);
  return min_quadratic_in_box(q, spheroid.center, window) <= 1.0;
}

Eigen::Vector3d orientation_axis(const model::Orientation& orientation) {
  const double st = std::sin(orientation.theta);
  return {st * std::cos(orientation.phi), st * std::sin(orientation.phi),
          std::cos(orientation.theta)};
}

std::vector<Spheroid> simulate_process(const ProcessConfig& cfg,
                                       long* pre_discard) {
  cfg.validate();
  const double mean_candidates = expected_hit_count(cfg);
  // Rejecting runaway configurations up front keeps callers that probe the
  // parameter space (step-halving fitters, user configs) failing fast instead
  // of attempting an astronomically large draw.
  if (!(mean_candidates <= 1e6)) {
    throw DataError(
        "simulate_process: expected candidate count exceeds 1e6; "
        "intensity, window or size distribution too large");
  }
  RngStream root(cfg.seed);
  RngStream count_stream = root.child(0);
  const long n = count_stream.poisson(mean_candidates);
  if (pre_discard) *pre_discard = n;

  const model::ModelParams& p = cfg.params;
  std::vector<Spheroid> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    RngStream item = root.child(static_cast<std::uint64_t>(i) + 1);
    Spheroid sp;
    sp.a = sample_hitting_radius(cfg, item);
    sp.center = sample_center_given_radius(cfg.window, sp.a, item);
    // eta | xi = log a is normal; with sigma1 = 0 the draw carries no
    // information and the conditional collapses to the marginal.
    double cond_mean = p.mu2;
    double cond_sd = p.sigma2;
    if (p.sigma1 > 0.0) {
      cond_mean += p.rho * (p.sigma2 / p.sigma1) * (std::log(sp.a) - p.mu1);
      cond_sd = p.sigma2 * std::sqrt(std::max(0.0, 1.0 - p.rho * p.rho));
    }
    const double s = model::logistic(item.normal(cond_mean, cond_sd));
    sp.c = sp.a * s;
    sp.axis = orientation_axis(model::sample_orientation(p.beta, item));
    if (hits_window(sp, cfg.window)) out.push_back(sp);
  }
  return out;
}

}  // namespace spherest::simulate
