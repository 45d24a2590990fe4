#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spherest/mle.hpp"
#include "spherest/model.hpp"
#include "spherest/qle.hpp"
#include "spherest/rng.hpp"
#include "spherest/unfold.hpp"

namespace spherest::study {

// Class counts of a binning preset; c_max is chosen per run from the pooled
// data.
struct BinningShape {
  int n_c = 0;
  int n_s = 0;
  int n_theta = 0;
};

// The five preset combinations, coarse to fine.
std::vector<BinningShape> default_binnings();

struct StudyConfig {
  model::ModelParams true_params;
  double lambda_v = 50.0;
  double window_side = 10.0;
  int n_reps = 20;
  std::vector<BinningShape> binnings = default_binnings();
  bool run_umle = true;
  bool run_qle = true;
  bool run_binmle = true;
  bool run_mle3d = true;
  int qle_n_sim = 50;
  long kernel_mc_reps = 10000;
  int bootstrap_b = 1000;
  std::uint64_t master_seed = 0;
  int threads = 1;
  // When nonempty, kernel matrices are cached here across runs.
  std::string kernel_cache_dir;

  void validate() const;
};

struct MethodResult {
  std::string name;
  Eigen::MatrixXd estimates;     // n_reps x 6, NaN rows for failed fits
  Eigen::VectorXd rmse;          // per parameter, over successful fits
  Eigen::VectorXd bootstrap_se;  // bootstrap SE of the rmse entries
  int failures = 0;
};

struct StudyResult {
  model::ModelParams true_params;
  std::vector<MethodResult> methods;
  Eigen::VectorXi section_counts;  // per replicate
  double c_max_2d = 0.0;
  double c_max_3d = 0.0;
  std::vector<unfold::BinningSpec> binnings_2d;
  std::vector<unfold::BinningSpec> binnings_3d;

  const MethodResult* find(const std::string& name) const;
};

// Full simulation study: per replicate one section dataset and one matched
// 3D sample, then every enabled method; per-method failures are recorded and
// excluded from the error summaries.
StudyResult run_study(const StudyConfig& cfg);

// Componentwise sqrt(mean((estimate - truth)^2)).
Eigen::VectorXd rmse(const std::vector<Eigen::VectorXd>& estimates,
                     const Eigen::VectorXd& truth);

// Standard deviation of the rmse statistic over B resamples (with
// replacement) of the estimates.
Eigen::VectorXd bootstrap_se_rmse(const std::vector<Eigen::VectorXd>& estimates,
                                  const Eigen::VectorXd& truth, int b,
                                  RngStream& rng);

// Draws one dataset of real values from the fitted model.
using ModelSampler = std::function<std::vector<double>(RngStream&)>;

// Monte Carlo two-sample KS test: the data and each of m simulated datasets
// are scored against the pool of the other datasets; exchangeable under the
// null, so the p-value is uniform on {1/(m+1), ..., 1}.
double ks_test_mc(const std::vector<double>& values,
                  const ModelSampler& sampler, int m, RngStream& rng);

struct EnvelopeResult {
  std::vector<double> grid;
  Eigen::VectorXd lower;      // pointwise 2.5% quantile of simulated cdfs
  Eigen::VectorXd upper;      // pointwise 97.5% quantile
  Eigen::VectorXd empirical;  // cdf of the data
};

EnvelopeResult envelope_cdf(const std::vector<double>& values,
                            const ModelSampler& sampler, int m,
                            const std::vector<double>& grid, RngStream& rng);

}  // namespace spherest::study
