#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spherest/rng.hpp"

namespace spherest::model {

// Size, shape and orientation law of the typical spheroid. (log a, logit s)
// is bivariate normal with mean (mu1, mu2) and covariance built from
// (sigma1, sigma2, rho); beta controls the polar-angle density.
struct ModelParams {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double rho = 0.0;
  double beta = 1.0;

  // Throws std::invalid_argument when out of domain.
  void validate() const;
};

// Semi-axis lengths of a prolate spheroid: a >= c > 0, s = c/a in (0, 1].
struct SizeShape {
  double a;
  double s;
  double c;
};

// Undirected axis direction: polar angle folded to [0, pi/2], azimuth in
// [0, 2*pi).
struct Orientation {
  double theta;
  double phi;
};

double logistic(double x);
double logit(double s);

SizeShape sample_size_shape(const ModelParams& params, RngStream& rng);

// Polar-angle density on the unfolded domain [0, pi).
double polar_density(double beta, double theta);
double polar_cdf(double beta, double theta);
double polar_quantile(double beta, double q);

Orientation sample_orientation(double beta, RngStream& rng);

// Joint density of (c, s) on (0, inf) x (0, 1); requires nondegenerate
// covariance.
double joint_density_cs(const ModelParams& params, double c, double s);

// P((c_lo, c_hi] x (s_lo, s_hi]) for (c, s) of the typical spheroid.
double cell_probability_cs(const ModelParams& params, double c_lo, double c_hi,
                           double s_lo, double s_hi);

// All cell probabilities of the grid spanned by the edge vectors; entry (i, j)
// covers (c_edges[i], c_edges[i+1]] x (s_edges[j], s_edges[j+1]]. Matches
// cell_probability_cs entrywise with one quadrature pass per s interval.
Eigen::MatrixXd cell_probability_grid(const ModelParams& params,
                                      const std::vector<double>& c_edges,
                                      const std::vector<double>& s_edges);

// Probability of the folded polar angle lying in (theta_lo, theta_hi],
// 0 <= theta_lo < theta_hi <= pi/2.
double cell_probability_polar(double beta, double theta_lo, double theta_hi);

}  // namespace spherest::model
