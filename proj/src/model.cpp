#include "spherest/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "spherest/numeric.hpp"

namespace spherest::model {

namespace {

constexpr double kPi = std::numbers::pi;

// Mass of a normal(mean, sd) beyond mean +- 9.5 sd is < 1e-20, so the
// eta-quadrature can be clamped to that range.
constexpr double kTailSds = 9.5;

}  // namespace

void ModelParams::validate() const {
  if (!(sigma1 >= 0.0) || !(sigma2 >= 0.0))
    throw std::invalid_argument("ModelParams: sigma1, sigma2 must be >= 0");
  if (!(rho >= -1.0 && rho <= 1.0))
    throw std::invalid_argument("ModelParams: rho must be in [-1, 1]");
  if (!(beta > 0.0)) throw std::invalid_argument("ModelParams: beta must be > 0");
  if (!std::isfinite(mu1) || !std::isfinite(mu2))
    throw std::invalid_argument("ModelParams: mu1, mu2 must be finite");
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double s) {
  if (!(s > 0.0 && s < 1.0))
    throw std::invalid_argument("logit: s must be in (0, 1)");
  return std::log(s / (1.0 - s));
}

SizeShape sample_size_shape(const ModelParams& params, RngStream& rng) {
  params.validate();
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  const double xi = params.mu1 + params.sigma1 * z1;
  const double eta =
      params.mu2 +
      params.sigma2 * (params.rho * z1 +
                       std::sqrt(std::max(0.0, 1.0 - params.rho * params.rho)) * z2);
  SizeShape out;
  out.a = std::exp(xi);
  out.s = logistic(eta);
  out.c = out.a * out.s;
  return out;
}

double polar_density(double beta, double theta) {
  if (!(beta > 0.0)) throw std::invalid_argument("polar_density: beta must be > 0");
  if (!(theta >= 0.0 && theta < kPi))
    throw std::invalid_argument("polar_density: theta must be in [0, pi)");
  const double sin_t = std::sin(theta);
  const double cos_t = std::cos(theta);
  // 1 + (beta^2 - 1) cos^2 = sin^2 + beta^2 cos^2, always positive.
  const double denom = sin_t * sin_t + beta * beta * cos_t * cos_t;
  return 0.5 * beta * sin_t / (denom * std::sqrt(denom));
}

double polar_cdf(double beta, double theta) {
  if (!(beta > 0.0)) throw std::invalid_argument("polar_cdf: beta must be > 0");
  if (!(theta >= 0.0 && theta < kPi))
    throw std::invalid_argument("polar_cdf: theta must be in [0, pi)");
  const double sin_t = std::sin(theta);
  const double cos_t = std::cos(theta);
  const double denom = std::sqrt(sin_t * sin_t + beta * beta * cos_t * cos_t);
  return 0.5 * (1.0 - beta * cos_t / denom);
}

double polar_quantile(double beta, double q) {
  if (!(beta > 0.0)) throw std::invalid_argument("polar_quantile: beta must be > 0");
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("polar_quantile: q must be in (0, 1)");
  const double u = 1.0 - 2.0 * q;
  const double denom = std::sqrt(beta * beta - u * u * (beta * beta - 1.0));
  return std::acos(std::clamp(u / denom, -1.0, 1.0));
}

Orientation sample_orientation(double beta, RngStream& rng) {
  const double raw = polar_quantile(beta, rng.uniform());
  Orientation out;
  out.theta = std::min(raw, kPi - raw);
  out.phi = rng.uniform(0.0, 2.0 * kPi);
  return out;
}

double joint_density_cs(const ModelParams& params, double c, double s) {
  params.validate();
  if (!(c > 0.0) || !(s > 0.0 && s < 1.0))
    throw std::invalid_argument("joint_density_cs: need c > 0, s in (0, 1)");
  if (params.sigma1 <= 0.0 || params.sigma2 <= 0.0 || std::abs(params.rho) >= 1.0)
    throw std::invalid_argument("density undefined for degenerate covariance");
  const double xi = std::log(c / s);
  const double eta = logit(s);
  const double z1 = (xi - params.mu1) / params.sigma1;
  const double z2 = (eta - params.mu2) / params.sigma2;
  const double r = params.rho;
  const double one_m_r2 = 1.0 - r * r;
  const double quad = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / one_m_r2;
  const double norm =
      1.0 / (2.0 * kPi * params.sigma1 * params.sigma2 * std::sqrt(one_m_r2));
  const double gauss = norm * std::exp(-0.5 * quad);
  return gauss / (c * s * (1.0 - s));
}

double cell_probability_cs(const ModelParams& params, double c_lo, double c_hi,
                           double s_lo, double s_hi) {
  params.validate();
  if (!(c_lo >= 0.0 && c_lo < c_hi))
    throw std::invalid_argument("cell_probability_cs: need 0 <= c_lo < c_hi");
  if (!(s_lo >= 0.0 && s_lo < s_hi && s_hi <= 1.0))
    throw std::invalid_argument("cell_probability_cs: need 0 <= s_lo < s_hi <= 1");

  const double log_c_lo = c_lo > 0.0 ? std::log(c_lo)
                                     : -std::numeric_limits<double>::infinity();
  const double log_c_hi = std::isfinite(c_hi)
                              ? std::log(c_hi)
                              : std::numeric_limits<double>::infinity();

  // P(xi in (log c - log s interval] | eta), xi | eta normal.
  const auto conditional = [&](double eta) {
    double cond_mean = params.mu1;
    double cond_sd = params.sigma1;
    if (params.sigma2 > 0.0) {
      cond_mean += params.rho * (params.sigma1 / params.sigma2) *
                   (eta - params.mu2);
      cond_sd = params.sigma1 *
                std::sqrt(std::max(0.0, 1.0 - params.rho * params.rho));
    }
    const double log_s = -std::log1p(std::exp(-eta));
    const double hi = numeric::normal_cdf(log_c_hi - log_s, cond_mean, cond_sd);
    const double lo = numeric::normal_cdf(log_c_lo - log_s, cond_mean, cond_sd);
    return hi - lo;
  };

  const double eta_lo_raw = s_lo > 0.0 ? logit(s_lo)
                                       : -std::numeric_limits<double>::infinity();
  const double eta_hi_raw = s_hi < 1.0 ? logit(s_hi)
                                       : std::numeric_limits<double>::infinity();

  if (params.sigma2 == 0.0) {
    const double in_cell =
        (params.mu2 > eta_lo_raw && params.mu2 <= eta_hi_raw) ? 1.0 : 0.0;
    return in_cell * conditional(params.mu2);
  }

  const double eta_lo = std::max(eta_lo_raw, params.mu2 - kTailSds * params.sigma2);
  const double eta_hi = std::min(eta_hi_raw, params.mu2 + kTailSds * params.sigma2);
  if (!(eta_lo < eta_hi)) return 0.0;

  const double p = numeric::integrate(
      [&](double eta) {
        return numeric::normal_pdf(eta, params.mu2, params.sigma2) *
               conditional(eta);
      },
      eta_lo, eta_hi, 1e-9);
  return std::clamp(p, 0.0, 1.0);
}

Eigen::MatrixXd cell_probability_grid(const ModelParams& params,
                                      const std::vector<double>& c_edges,
                                      const std::vector<double>& s_edges) {
  params.validate();
  if (c_edges.size() < 2 || s_edges.size() < 2)
    throw std::invalid_argument("cell_probability_grid: need >= 2 edges per axis");
  if (!(c_edges.front() >= 0.0) || !(s_edges.front() >= 0.0) ||
      !(s_edges.back() <= 1.0))
    throw std::invalid_argument("cell_probability_grid: edges out of domain");
  for (std::size_t i = 1; i < c_edges.size(); ++i)
    if (!(c_edges[i - 1] < c_edges[i]))
      throw std::invalid_argument("cell_probability_grid: c edges not increasing");
  for (std::size_t j = 1; j < s_edges.size(); ++j)
    if (!(s_edges[j - 1] < s_edges[j]))
      throw std::invalid_argument("cell_probability_grid: s edges not increasing");

  const int n_c = static_cast<int>(c_edges.size()) - 1;
  const int n_s = static_cast<int>(s_edges.size()) - 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_c, n_s);

  std::vector<double> log_c(c_edges.size());
  for (std::size_t i = 0; i < c_edges.size(); ++i)
    log_c[i] = c_edges[i] > 0.0 ? std::log(c_edges[i])
                                : -std::numeric_limits<double>::infinity();

  double cond_sd = params.sigma1;
  double slope = 0.0;
  if (params.sigma2 > 0.0) {
    slope = params.rho * (params.sigma1 / params.sigma2);
    cond_sd = params.sigma1 *
              std::sqrt(std::max(0.0, 1.0 - params.rho * params.rho));
  }

  // Column of P(log c <= edge | eta) over all c edges.
  Eigen::VectorXd cdf(n_c + 1);
  const auto accumulate_node = [&](double eta, double weight,
                                   Eigen::Ref<Eigen::VectorXd> col) {
    const double cond_mean = params.mu1 + slope * (eta - params.mu2);
    const double log_s = -std::log1p(std::exp(-eta));
    for (int i = 0; i <= n_c; ++i)
      cdf[i] = numeric::normal_cdf(log_c[i] - log_s, cond_mean, cond_sd);
    for (int i = 0; i < n_c; ++i) col[i] += weight * (cdf[i + 1] - cdf[i]);
  };

  for (int j = 0; j < n_s; ++j) {
    const double eta_lo_raw = s_edges[j] > 0.0
                                  ? logit(s_edges[j])
                                  : -std::numeric_limits<double>::infinity();
    const double eta_hi_raw = s_edges[j + 1] < 1.0
                                  ? logit(s_edges[j + 1])
                                  : std::numeric_limits<double>::infinity();

    if (params.sigma2 == 0.0) {
      if (params.mu2 > eta_lo_raw && params.mu2 <= eta_hi_raw)
        accumulate_node(params.mu2, 1.0, out.col(j));
      continue;
    }

    const double eta_lo =
        std::max(eta_lo_raw, params.mu2 - kTailSds * params.sigma2);
    const double eta_hi =
        std::min(eta_hi_raw, params.mu2 + kTailSds * params.sigma2);
    if (!(eta_lo < eta_hi)) continue;

    // Fixed panels of ~sigma2/4 keep the smooth integrand at full precision.
    const int panels = std::clamp(
        static_cast<int>(std::ceil(4.0 * (eta_hi - eta_lo) / params.sigma2)), 4,
        128);
    const double h = (eta_hi - eta_lo) / panels;
    for (int p = 0; p < panels; ++p) {
      const double mid = eta_lo + (p + 0.5) * h;
      const double half = 0.5 * h;
      for (int q = 0; q < 15; ++q) {
        const double eta = mid + half * numeric::detail::kGk15.nodes[q];
        const double w = half * numeric::detail::kGk15.kronrod_weights[q] *
                         numeric::normal_pdf(eta, params.mu2, params.sigma2);
        accumulate_node(eta, w, out.col(j));
      }
    }
  }
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

double cell_probability_polar(double beta, double theta_lo, double theta_hi) {
  if (!(theta_lo >= 0.0 && theta_lo < theta_hi && theta_hi <= kPi / 2.0 + 1e-15))
    throw std::invalid_argument(
        "cell_probability_polar: need 0 <= theta_lo < theta_hi <= pi/2");
  const double hi = std::min(theta_hi, kPi / 2.0);
  return 2.0 * (polar_cdf(beta, hi) - polar_cdf(beta, theta_lo));
}

}  // namespace spherest::model
