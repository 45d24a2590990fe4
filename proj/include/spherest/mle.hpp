#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spherest/model.hpp"
#include "spherest/unfold.hpp"

namespace spherest::mle {

// Result of a binned fit (beta plus size-shape) or of the continuous fit
// from 3D attributes. loglik fields re-evaluate exactly at params.
struct MleFit {
  model::ModelParams params;
  double loglik_beta = 0.0;
  double loglik_size_shape = 0.0;
  int iterations = 0;
  bool converged = false;
  bool beta_at_boundary = false;
};

struct BetaFit {
  double beta = 1.0;
  double loglik = 0.0;
  bool at_boundary = false;
};

struct SizeShapeFit {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double rho = 0.0;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Weighted log-likelihood of the polar-angle classes
// (theta_edges[k], theta_edges[k+1]], weights summing to the used mass.
// Returns -inf when a zero-probability class carries positive weight.
double loglik_beta_marginal(double beta, const Eigen::VectorXd& weights,
                            const std::vector<double>& theta_edges);

// Same on the theta-marginal of a (normalized) trivariate histogram.
double loglik_beta(const unfold::Histogram3D& h, double beta);

// Maximizes loglik_beta over log beta in [-6, 6].
BetaFit fit_beta_marginal(const Eigen::VectorXd& weights,
                          const std::vector<double>& theta_edges);
BetaFit fit_beta(const unfold::Histogram3D& h);

// Weighted log-likelihood of the (c, s) classes with cell probabilities
// renormalized over the truncated grid c <= c_max.
double loglik_size_shape(const model::ModelParams& params,
                         const Eigen::MatrixXd& weights,
                         const std::vector<double>& c_edges,
                         const std::vector<double>& s_edges);

// Simplex search over (mu1, mu2, log sigma1, log sigma2, atanh rho) from
// moment-of-midpoints starting values.
SizeShapeFit fit_size_shape(const unfold::Histogram3D& h);

// fit_beta + fit_size_shape on one histogram.
MleFit fit_binned(const unfold::Histogram3D& h);

// 3D attributes of one spheroid: semi-minor c, shape s, folded polar angle.
struct Sample3D {
  double c = 0.0;
  double s = 0.0;
  double theta = 0.0;
};

// Continuous maximum likelihood: closed-form Gaussian MLE of (mu, Sigma) on
// (log(c/s), logit s), bounded 1D search for beta.
MleFit fit_mle3d(const std::vector<Sample3D>& samples);

}  // namespace spherest::mle
