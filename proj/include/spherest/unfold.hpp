#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spherest/sectioning.hpp"

namespace spherest::unfold {

// Equidistant classes for c in (0, c_max], s in (0, 1], theta/alpha in
// [0, pi/2]; identical classes are used for 3D attributes and section
// attributes. Bins are right-closed; the first bin also contains the lower
// domain endpoint.
struct BinningSpec {
  int n_c = 0;
  int n_s = 0;
  int n_theta = 0;
  double c_max = 0.0;

  void validate() const;
  int classes() const { return n_c * n_s * n_theta; }
  int flat_index(int i, int j, int k) const {
    return (i * n_s + j) * n_theta + k;
  }
  double c_edge(int i) const;
  double s_edge(int j) const;
  double theta_edge(int k) const;
  // Class indices; the c/s/theta value must lie in the binned domain.
  int index_c(double c) const;
  int index_s(double s) const;
  int index_theta(double theta) const;

  bool operator==(const BinningSpec&) const = default;
};

struct Histogram3D {
  BinningSpec binning;
  Eigen::VectorXd values;  // flattened (i, j, k)
  bool normalized = false;

  Histogram3D() = default;
  explicit Histogram3D(const BinningSpec& spec)
      : binning(spec), values(Eigen::VectorXd::Zero(spec.classes())) {}

  double total() const { return values.sum(); }
  Histogram3D as_normalized() const;
  Eigen::VectorXd theta_marginal() const;       // size n_theta
  Eigen::MatrixXd cs_marginal() const;          // n_c x n_s
};

// Discretized section operator. entries(I, j) is the expected number of
// section profiles in observed class I generated per spheroid of source
// class j and unit length of plane sampling; rows and columns share one
// binning.
struct KernelMatrix {
  BinningSpec binning;
  Eigen::MatrixXd entries;
  Eigen::MatrixXf entry_se;
  long mc_reps = 0;
  std::uint64_t seed = 0;
};

// Bins (c or C, s or S, theta or alpha) triples; values outside the binned
// domain raise an error naming the record.
Histogram3D bin_triples(const std::vector<std::array<double, 3>>& triples,
                        const BinningSpec& binning);

Histogram3D bin_ellipses(const std::vector<sectioning::SectionEllipse>& ellipses,
                         const BinningSpec& binning);

// Monte Carlo estimate of the section kernel: per source class, attributes
// are drawn uniformly within the class and the section plane offset uniformly
// over the spheroid's support interval, weighting each profile by the
// support width.
KernelMatrix estimate_kernel(const BinningSpec& binning, long mc_reps,
                             std::uint64_t seed, int threads = 1);

void save_kernel(const std::string& path, const KernelMatrix& kernel);
KernelMatrix load_kernel(const std::string& path);

struct EmResult {
  Histogram3D h;  // normalized class frequencies of the typical spheroid
  int iterations = 0;
  double loglik = 0.0;
  std::vector<double> loglik_trace;
};

// Expectation-maximization solution of the discretized unfolding system for
// observed raw counts g.
EmResult em_unfold(const Histogram3D& g, const KernelMatrix& kernel,
                   int max_iter = 2000, double rel_tol = 1e-6);

}  // namespace spherest::unfold
