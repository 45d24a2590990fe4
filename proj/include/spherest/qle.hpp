#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "spherest/model.hpp"
#include "spherest/sectioning.hpp"
#include "spherest/simulate.hpp"

namespace spherest::qle {

inline constexpr int kNumStats = 12;
inline constexpr int kNumParams = 6;

using StatsVector = Eigen::Matrix<double, kNumStats, 1>;
using CovMatrix = Eigen::Matrix<double, kNumStats, kNumStats>;
using ParamVector = Eigen::Matrix<double, kNumParams, 1>;
using InfoMatrix = Eigen::Matrix<double, kNumParams, kNumParams>;
using JacobianMatrix = Eigen::Matrix<double, kNumStats, kNumParams>;

// The 12 summaries in fixed order: med then mad of (log C, log A, Y, S,
// alpha) with Y = logit S and A = C/S, then cor(log C, log A), cor(log A, Y).
StatsVector compute_statistics(
    const std::vector<sectioning::SectionEllipse>& ellipses);

// Unconstrained coordinates (mu1, mu2, log s1, log s2, atanh rho, log beta).
ParamVector to_unconstrained(const model::ModelParams& p);
model::ModelParams from_unconstrained(const ParamVector& z);
ParamVector natural_vector(const model::ModelParams& p);

// Forward-simulation setup shared by all moment estimates: plate window in
// the fixed vertical section plane, observation rectangle, intensity.
struct SimConfig {
  double lambda_v = 50.0;
  simulate::BoxWindow window;
  sectioning::Rect2 observed{0.0, 0.0, 0.0, 0.0};
  // When set, lambda_v is replaced per parameter value so that the expected
  // section count equals target_n (for data of unknown intensity).
  bool match_sample_size = false;
  double target_n = 0.0;
};

// Plate of the given side centered on the origin of the vertical plane,
// with the full plate square as observation window.
SimConfig square_window_config(double side, double lambda_v);

// Expected section count per unit window area and unit intensity: the mean
// support width E[2 hw] of the typical spheroid along the plane normal.
// Frozen-seed Monte Carlo, deterministic and smooth in theta.
double mean_section_width(const model::ModelParams& theta);

// One full pipeline replicate: exact process draw, vertical section,
// centers-in edge rule.
std::vector<sectioning::SectionEllipse> simulate_dataset(
    const model::ModelParams& theta, const SimConfig& cfg, std::uint64_t seed);

struct MomentEstimate {
  StatsVector mean = StatsVector::Zero();
  CovMatrix cov = CovMatrix::Zero();
  int n_sim = 0;
  std::uint64_t seed = 0;
};

// Mean and covariance of the statistics over n_sim independent replicates;
// bit-reproducible for fixed (theta, cfg, n_sim, seed). Replicates with
// fewer than 3 profiles are redrawn from fresh child seeds (10 attempts).
MomentEstimate estimate_moments(const model::ModelParams& theta,
                                const SimConfig& cfg, int n_sim,
                                std::uint64_t seed, int threads = 1);

ParamVector default_steps();

// Central finite differences of the moment means in the unconstrained
// coordinates, with identical child-seed schedules at both sides (common
// random numbers).
JacobianMatrix estimate_jacobian(const model::ModelParams& theta,
                                 const SimConfig& cfg, int n_sim,
                                 std::uint64_t seed, const ParamVector& steps,
                                 int threads = 1);

// Solves cov * X = rhs after symmetrizing and ridging the left side
// (epsilon * trace/q on the diagonal, escalating tenfold until the condition
// number is below 1e12).
Eigen::MatrixXd regularized_solve(const Eigen::MatrixXd& cov,
                                  const Eigen::MatrixXd& rhs);

// J^T cov^{-1} (y - mean).
Eigen::VectorXd quasi_score(const Eigen::MatrixXd& jacobian,
                            const Eigen::MatrixXd& cov,
                            const Eigen::VectorXd& y,
                            const Eigen::VectorXd& mean);

// J^T cov^{-1} J, symmetrized.
Eigen::MatrixXd quasi_information(const Eigen::MatrixXd& jacobian,
                                  const Eigen::MatrixXd& cov);

struct QleConfig {
  int n_sim = 100;
  int max_iter = 30;
  double deviance_tol = 1e-2;
  int max_halvings = 6;
  // Trust radius: proposed steps are shrunk to this norm in the unconstrained
  // coordinates before backtracking starts.
  double max_step_norm = 1.0;
  ParamVector steps = default_steps();
  std::uint64_t seed = 0;
  int threads = 1;
};

struct IterationRecord {
  ParamVector z = ParamVector::Zero();  // unconstrained iterate
  double step = 1.0;                    // accepted step length
  double score_norm = 0.0;
  double deviance = 0.0;
};

struct QleFit {
  model::ModelParams theta_hat;
  std::vector<IterationRecord> trace;
  InfoMatrix quasi_info = InfoMatrix::Zero();  // unconstrained coordinates
  ParamVector asymptotic_se = ParamVector::Zero();  // natural coordinates
  bool converged = false;
  bool stalled = false;
  int iterations = 0;
};

// Moments, covariance and Jacobian at one parameter value. The evaluator is
// injectable so an exact model can replace the simulator in tests.
struct MomentModel {
  StatsVector mean = StatsVector::Zero();
  CovMatrix cov = CovMatrix::Zero();
  JacobianMatrix jacobian = JacobianMatrix::Zero();
};
using MomentEvaluator = std::function<MomentModel(const ParamVector&)>;

// Fisher quasi-scoring with backtracking step halving on the quasi-deviance
// Q^T I^{-1} Q; under a deterministic evaluator the iteration is itself a
// deterministic map and the accepted deviance strictly decreases.
QleFit quasi_scoring_core(const StatsVector& y, const ParamVector& z0,
                          const QleConfig& cfg, const MomentEvaluator& eval);

// Simulator-backed fit with one frozen seed schedule reused by every moment
// and Jacobian evaluation across iterations.
QleFit quasi_scoring_fit(const StatsVector& y,
                         const model::ModelParams& theta0,
                         const SimConfig& sim_cfg, const QleConfig& cfg);

// Crude feasible starting point read off the data statistics.
model::ModelParams default_start(const StatsVector& y);

}  // namespace spherest::qle
