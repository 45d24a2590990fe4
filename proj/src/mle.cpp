#include "spherest/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "spherest/errors.hpp"
#include "spherest/numeric.hpp"

namespace spherest::mle {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogBetaLo = -6.0;
constexpr double kLogBetaHi = 6.0;

void check_theta_edges(const std::vector<double>& edges) {
  if (edges.size() < 2)
    throw std::invalid_argument("loglik_beta: need >= 2 theta edges");
  if (!(edges.front() >= 0.0) || !(edges.back() <= kPi / 2.0 + 1e-12))
    throw std::invalid_argument("loglik_beta: theta edges outside [0, pi/2]");
  for (std::size_t k = 1; k < edges.size(); ++k)
    if (!(edges[k - 1] < edges[k]))
      throw std::invalid_argument("loglik_beta: theta edges not increasing");
}

std::vector<double> theta_edges_of(const unfold::BinningSpec& binning) {
  std::vector<double> edges(binning.n_theta + 1);
  for (int k = 0; k <= binning.n_theta; ++k) edges[k] = binning.theta_edge(k);
  return edges;
}

// Weighted mean/covariance of (log(c/s), logit s) over class midpoints.
struct MidpointMoments {
  double mean_xi, mean_eta, var_xi, var_eta, cov;
};

MidpointMoments midpoint_moments(const Eigen::MatrixXd& weights,
                                 const std::vector<double>& c_edges,
                                 const std::vector<double>& s_edges) {
  double w_sum = 0.0, m_xi = 0.0, m_eta = 0.0;
  double s_xx = 0.0, s_ee = 0.0, s_xe = 0.0;
  for (int i = 0; i < weights.rows(); ++i) {
    for (int j = 0; j < weights.cols(); ++j) {
      const double w = weights(i, j);
      if (w <= 0.0) continue;
      const double c_mid = 0.5 * (c_edges[i] + c_edges[i + 1]);
      const double s_mid = 0.5 * (s_edges[j] + s_edges[j + 1]);
      const double xi = std::log(c_mid / s_mid);
      const double eta = model::logit(s_mid);
      w_sum += w;
      m_xi += w * xi;
      m_eta += w * eta;
      s_xx += w * xi * xi;
      s_ee += w * eta * eta;
      s_xe += w * xi * eta;
    }
  }
  MidpointMoments out;
  out.mean_xi = m_xi / w_sum;
  out.mean_eta = m_eta / w_sum;
  out.var_xi = std::max(0.0, s_xx / w_sum - out.mean_xi * out.mean_xi);
  out.var_eta = std::max(0.0, s_ee / w_sum - out.mean_eta * out.mean_eta);
  out.cov = s_xe / w_sum - out.mean_xi * out.mean_eta;
  return out;
}

}  // namespace

double loglik_beta_marginal(double beta, const Eigen::VectorXd& weights,
                            const std::vector<double>& theta_edges) {
  if (!(beta > 0.0))
    throw std::invalid_argument("loglik_beta: beta must be > 0");
  check_theta_edges(theta_edges);
  if (weights.size() != static_cast<Eigen::Index>(theta_edges.size()) - 1)
    throw std::invalid_argument("loglik_beta: weights/edges size mismatch");
  double ll = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    const double w = weights[k];
    if (w <= 0.0) continue;
    const double p =
        model::cell_probability_polar(beta, theta_edges[k], theta_edges[k + 1]);
    if (p <= 0.0) return -kInf;
    ll += w * std::log(p);
  }
  return ll;
}

double loglik_beta(const unfold::Histogram3D& h, double beta) {
  const unfold::Histogram3D hn = h.as_normalized();
  return loglik_beta_marginal(beta, hn.theta_marginal(),
                              theta_edges_of(h.binning));
}

BetaFit fit_beta_marginal(const Eigen::VectorXd& weights,
                          const std::vector<double>& theta_edges) {
  check_theta_edges(theta_edges);
  if (!(weights.sum() > 0.0))
    throw DataError("fit_beta: theta marginal has no mass");
  const auto objective = [&](double log_beta) {
    return -loglik_beta_marginal(std::exp(log_beta), weights, theta_edges);
  };
  const numeric::ScalarMinResult r =
      numeric::grid_brent_minimize(objective, kLogBetaLo, kLogBetaHi, 128);
  BetaFit fit;
  fit.beta = std::exp(r.x);
  fit.loglik = -r.fx;
  fit.at_boundary =
      r.x <= kLogBetaLo + 1e-6 || r.x >= kLogBetaHi - 1e-6;
  return fit;
}

BetaFit fit_beta(const unfold::Histogram3D& h) {
  const unfold::Histogram3D hn = h.as_normalized();
  return fit_beta_marginal(hn.theta_marginal(), theta_edges_of(h.binning));
}

double loglik_size_shape(const model::ModelParams& params,
                         const Eigen::MatrixXd& weights,
                         const std::vector<double>& c_edges,
                         const std::vector<double>& s_edges) {
  if (weights.rows() != static_cast<Eigen::Index>(c_edges.size()) - 1 ||
      weights.cols() != static_cast<Eigen::Index>(s_edges.size()) - 1)
    throw std::invalid_argument("loglik_size_shape: weights/edges mismatch");
  const Eigen::MatrixXd q = model::cell_probability_grid(params, c_edges, s_edges);
  const double q_total = q.sum();
  if (!(q_total > 0.0)) return -kInf;
  const double log_total = std::log(q_total);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      const double w = weights(i, j);
      if (w <= 0.0) continue;
      if (q(i, j) <= 0.0) return -kInf;
      ll += w * (std::log(q(i, j)) - log_total);
    }
  }
  return ll;
}

SizeShapeFit fit_size_shape(const unfold::Histogram3D& h) {
  const unfold::Histogram3D hn = h.as_normalized();
  const Eigen::MatrixXd weights = hn.cs_marginal();
  const unfold::BinningSpec& b = hn.binning;
  std::vector<double> c_edges(b.n_c + 1), s_edges(b.n_s + 1);
  for (int i = 0; i <= b.n_c; ++i) c_edges[i] = b.c_edge(i);
  for (int j = 0; j <= b.n_s; ++j) s_edges[j] = b.s_edge(j);

  int occupied = 0;
  for (int i = 0; i < weights.rows(); ++i)
    for (int j = 0; j < weights.cols(); ++j)
      if (weights(i, j) > 1e-9) ++occupied;
  if (occupied < 2) throw DataError("fit_size_shape: insufficient support");

  const MidpointMoments mom = midpoint_moments(weights, c_edges, s_edges);
  const double sd_xi = std::max(0.05, std::sqrt(mom.var_xi));
  const double sd_eta = std::max(0.05, std::sqrt(mom.var_eta));
  const double rho0 =
      std::clamp(mom.cov / (sd_xi * sd_eta), -0.9, 0.9);

  const auto to_params = [](const Eigen::VectorXd& z) {
    model::ModelParams p;
    p.mu1 = z[0];
    p.mu2 = z[1];
    p.sigma1 = std::exp(z[2]);
    p.sigma2 = std::exp(z[3]);
    p.rho = std::tanh(z[4]);
    p.beta = 1.0;
    return p;
  };
  const auto objective = [&](const Eigen::VectorXd& z) {
    return -loglik_size_shape(to_params(z), weights, c_edges, s_edges);
  };

  Eigen::VectorXd z0(5);
  z0 << mom.mean_xi, mom.mean_eta, std::log(sd_xi), std::log(sd_eta),
      std::atanh(rho0);
  numeric::SimplexOptions opts;
  opts.initial_step = 0.1;
  const numeric::SimplexResult r = numeric::nelder_mead(objective, z0, opts);

  const model::ModelParams p = to_params(r.x);
  SizeShapeFit fit;
  fit.mu1 = p.mu1;
  fit.mu2 = p.mu2;
  fit.sigma1 = p.sigma1;
  fit.sigma2 = p.sigma2;
  fit.rho = p.rho;
  fit.loglik = -r.fx;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  return fit;
}

MleFit fit_binned(const unfold::Histogram3D& h) {
  const BetaFit bf = fit_beta(h);
  const SizeShapeFit sf = fit_size_shape(h);
  MleFit fit;
  fit.params.mu1 = sf.mu1;
  fit.params.mu2 = sf.mu2;
  fit.params.sigma1 = sf.sigma1;
  fit.params.sigma2 = sf.sigma2;
  fit.params.rho = sf.rho;
  fit.params.beta = bf.beta;
  fit.loglik_beta = bf.loglik;
  fit.loglik_size_shape = sf.loglik;
  fit.iterations = sf.iterations;
  fit.converged = sf.converged;
  fit.beta_at_boundary = bf.at_boundary;
  return fit;
}

MleFit fit_mle3d(const std::vector<Sample3D>& samples) {
  if (samples.size() < 10)
    throw DataError("fit_mle3d: need at least 10 samples");
  const auto n = static_cast<double>(samples.size());
  double m_xi = 0.0, m_eta = 0.0;
  for (std::size_t l = 0; l < samples.size(); ++l) {
    const Sample3D& rec = samples[l];
    if (!(rec.c > 0.0) || !(rec.s > 0.0 && rec.s < 1.0) ||
        !(rec.theta >= 0.0 && rec.theta <= kPi / 2.0 + 1e-12))
      throw DataError("fit_mle3d: invalid record " + std::to_string(l + 1));
    m_xi += std::log(rec.c / rec.s);
    m_eta += model::logit(rec.s);
  }
  m_xi /= n;
  m_eta /= n;
  double s_xx = 0.0, s_ee = 0.0, s_xe = 0.0;
  for (const Sample3D& rec : samples) {
    const double dx = std::log(rec.c / rec.s) - m_xi;
    const double de = model::logit(rec.s) - m_eta;
    s_xx += dx * dx;
    s_ee += de * de;
    s_xe += dx * de;
  }
  const double var_xi = s_xx / n;
  const double var_eta = s_ee / n;
  if (!(var_xi > 0.0) || !(var_eta > 0.0))
    throw DataError("fit_mle3d: degenerate sample covariance");

  MleFit fit;
  fit.params.mu1 = m_xi;
  fit.params.mu2 = m_eta;
  fit.params.sigma1 = std::sqrt(var_xi);
  fit.params.sigma2 = std::sqrt(var_eta);
  fit.params.rho = std::clamp(s_xe / n / (fit.params.sigma1 * fit.params.sigma2),
                              -1.0 + 1e-12, 1.0 - 1e-12);

  // Gaussian log-likelihood of (log(c/s), logit s) plus the log-Jacobian of
  // the (c, s) transform.
  double ll_cs = 0.0;
  for (const Sample3D& rec : samples)
    ll_cs += std::log(model::joint_density_cs(fit.params, rec.c, rec.s));
  fit.loglik_size_shape = ll_cs;

  const auto beta_objective = [&](double log_beta) {
    const double beta = std::exp(log_beta);
    double ll = 0.0;
    for (const Sample3D& rec : samples) {
      const double theta = std::min(rec.theta, kPi / 2.0);
      const double d = 2.0 * model::polar_density(beta, theta);
      if (!(d > 0.0)) return kInf;
      ll += std::log(d);
    }
    return -ll;
  };
  const numeric::ScalarMinResult r =
      numeric::grid_brent_minimize(beta_objective, kLogBetaLo, kLogBetaHi, 128);
  fit.params.beta = std::exp(r.x);
  fit.loglik_beta = -r.fx;
  fit.beta_at_boundary = r.x <= kLogBetaLo + 1e-6 || r.x >= kLogBetaHi - 1e-6;
  fit.converged = true;
  fit.iterations = r.evaluations;
  return fit;
}

}  // namespace spherest::mle
