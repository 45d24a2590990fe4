#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spherest/model.hpp"
#include "spherest/rng.hpp"

namespace spherest::simulate {

// Axis-aligned box given by its lower corner and edge lengths; one zero edge
// encodes a flat plate.
struct BoxWindow {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d edges = Eigen::Vector3d::Zero();

  void validate() const;
  Eigen::Vector3d lower() const { return origin; }
  Eigen::Vector3d upper() const { return origin + edges; }
  // Squared Euclidean distance from x to the box.
  double squared_distance(const Eigen::Vector3d& x) const;
};

// Intrinsic volumes entering V(W + B_r) = a0 + a1 r + a2 r^2 + a3 r^3.
struct SteinerCoefficients {
  double a0;
  double a1;
  double a2;
  double a3;
};

struct Spheroid {
  Eigen::Vector3d center;
  Eigen::Vector3d axis;  // unit vector
  double a;              // semi-major
  double c;              // semi-minor, c <= a
};

struct ProcessConfig {
  double lambda_v = 50.0;
  model::ModelParams params;
  BoxWindow window;
  std::uint64_t seed = 0;

  void validate() const;
};

SteinerCoefficients steiner_coefficients(const BoxWindow& window);

// Mean of the Poisson number of circumscribed balls hitting the window.
double expected_hit_count(const ProcessConfig& cfg);

// Mixture weights over the Steiner terms k = 0..3 of the hitting-radius law.
Eigen::Vector4d hitting_mixture_weights(const ProcessConfig& cfg);

// Density of the semi-major axis among spheroids whose circumscribed ball
// hits the window.
double hitting_radius_pdf(const ProcessConfig& cfg, double r);

double sample_hitting_radius(const ProcessConfig& cfg, RngStream& rng);

Eigen::Vector3d sample_center_given_radius(const BoxWindow& window, double r,
                                           RngStream& rng);

// True when the spheroid body intersects the box (boundary contact counts).
bool hits_window(const Spheroid& spheroid, const BoxWindow& window);

// Exact draw of all spheroids of the stationary process hitting the window.
// When pre_discard is non-null it receives the count of generated candidate
// balls before the final non-hitting spheroids are removed.
std::vector<Spheroid> simulate_process(const ProcessConfig& cfg,
                                       long* pre_discard = nullptr);

// Axis direction from the folded polar angle (about the z axis) and azimuth.
Eigen::Vector3d orientation_axis(const model::Orientation& orientation);

}  // namespace spherest::simulate
