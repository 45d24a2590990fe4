#include "spherest/qle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "spherest/errors.hpp"
#include "spherest/parallel.hpp"
#include "spherest/stats.hpp"

namespace spherest::qle {

namespace {

constexpr std::uint64_t kWidthSeed = 0x9e3779b97f4a7c15ull;
constexpr int kWidthDraws = 4096;

}  // namespace

StatsVector compute_statistics(
    const std::vector<sectioning::SectionEllipse>& ellipses) {
  const auto n = static_cast<Eigen::Index>(ellipses.size());
  if (n < 3) throw DataError("compute_statistics: need at least 3 ellipses");
  Eigen::VectorXd log_c(n), log_a(n), y(n), s(n), alpha(n);
  for (Eigen::Index l = 0; l < n; ++l) {
    const sectioning::SectionEllipse& e = ellipses[l];
    if (!(e.S > 0.0 && e.S < 1.0) || !(e.C > 0.0))
      throw DataError("compute_statistics: record " + std::to_string(l + 1) +
                      " has S outside (0, 1); logit undefined");
    log_c[l] = std::log(e.C);
    log_a[l] = std::log(e.A);
    s[l] = e.S;
    y[l] = model::logit(e.S);
    alpha[l] = e.alpha;
  }
  StatsVector out;
  const Eigen::VectorXd* columns[5] = {&log_c, &log_a, &y, &s, &alpha};
  for (int k = 0; k < 5; ++k) {
    out[k] = stats::median(*columns[k]);
    out[5 + k] = stats::mad(*columns[k]);
  }
  try {
    out[10] = stats::pearson_cor(log_c, log_a);
    out[11] = stats::pearson_cor(log_a, y);
  } catch (const std::invalid_argument&) {
    throw DataError("compute_statistics: zero variance in correlation input");
  }
  return out;
}

ParamVector to_unconstrained(const model::ModelParams& p) {
  p.validate();
  if (!(p.sigma1 > 0.0 && p.sigma2 > 0.0) || !(std::abs(p.rho) < 1.0))
    throw std::invalid_argument(
        "to_unconstrained: need sigma > 0 and |rho| < 1");
  ParamVector z;
  z << p.mu1, p.mu2, std::log(p.sigma1), std::log(p.sigma2), std::atanh(p.rho),
      std::log(p.beta);
  return z;
}

model::ModelParams from_unconstrained(const ParamVector& z) {
  if (!z.allFinite())
    throw std::invalid_argument("from_unconstrained: non-finite coordinates");
  model::ModelParams p;
  p.mu1 = z[0];
  p.mu2 = z[1];
  p.sigma1 = std::exp(z[2]);
  p.sigma2 = std::exp(z[3]);
  p.rho = std::tanh(z[4]);
  p.beta = std::exp(z[5]);
  if (!std::isfinite(p.sigma1) || !std::isfinite(p.sigma2) ||
      !std::isfinite(p.beta))
    throw std::invalid_argument("from_unconstrained: parameter overflow");
  p.validate();
  return p;
}

ParamVector natural_vector(const model::ModelParams& p) {
  ParamVector v;
  v << p.mu1, p.mu2, p.sigma1, p.sigma2, p.rho, p.beta;
  return v;
}

SimConfig square_window_config(double side, double lambda_v) {
  if (!(side > 0.0))
    throw std::invalid_argument("square_window_config: side must be > 0");
  SimConfig cfg;
  cfg.lambda_v = lambda_v;
  cfg.window.origin = Eigen::Vector3d(0.0, -0.5 * side, -0.5 * side);
  cfg.window.edges = Eigen::Vector3d(0.0, side, side);
  cfg.observed = {-0.5 * side, 0.5 * side, -0.5 * side, 0.5 * side};
  return cfg;
}

double mean_section_width(const model::ModelParams& theta) {
  theta.validate();
  RngStream rng(kWidthSeed);
  double sum = 0.0;
  for (int i = 0; i < kWidthDraws; ++i) {
    const model::SizeShape ss = model::sample_size_shape(theta, rng);
    const model::Orientation o = model::sample_orientation(theta.beta, rng);
    // Component of the axis along the plane normal (x).
    const double u = std::sin(o.theta) * std::cos(o.phi);
    const double hw =
        std::sqrt(ss.c * ss.c + (ss.a * ss.a - ss.c * ss.c) * u * u);
    sum += 2.0 * hw;
  }
  return sum / kWidthDraws;
}

std::vector<sectioning::SectionEllipse> simulate_dataset(
    const model::ModelParams& theta, const SimConfig& cfg, std::uint64_t seed) {
  double lambda = cfg.lambda_v;
  if (cfg.match_sample_size) {
    if (!(cfg.target_n > 0.0))
      throw std::invalid_argument(
          "simulate_dataset: target_n must be > 0 when matching sample size");
    const double area = (cfg.observed.x_hi - cfg.observed.x_lo) *
                        (cfg.observed.y_hi - cfg.observed.y_lo);
    lambda = cfg.target_n / (area * mean_section_width(theta));
  }
  simulate::ProcessConfig pc;
  pc.lambda_v = lambda;
  pc.params = theta;
  pc.window = cfg.window;
  pc.seed = seed;
  const std::vector<simulate::Spheroid> spheroids = simulate::simulate_process(pc);
  return sectioning::section_process(spheroids, sectioning::vertical_plane(),
                                     cfg.observed,
                                     sectioning::EdgeRule::kCentersIn);
}

MomentEstimate estimate_moments(const model::ModelParams& theta,
                                const SimConfig& cfg, int n_sim,
                                std::uint64_t seed, int threads) {
  if (n_sim < 20)
    throw std::invalid_argument("estimate_moments: n_sim must be >= 20");
  theta.validate();
  const RngStream root(seed);
  Eigen::MatrixXd rows(n_sim, kNumStats);
  std::vector<int> failed(n_sim, 0);
  parallel_for(static_cast<std::size_t>(n_sim), threads, [&](std::size_t r) {
    const RngStream rep = root.child(r);
    bool ok = false;
    for (std::uint64_t attempt = 0; attempt < 10 && !ok; ++attempt) {
      const std::uint64_t ds_seed = rep.child(attempt).base_seed();
      try {
        const auto ellipses = simulate_dataset(theta, cfg, ds_seed);
        rows.row(static_cast<Eigen::Index>(r)) =
            compute_statistics(ellipses).transpose();
        ok = true;
      } catch (const DataError&) {
      }
    }
    if (!ok) failed[r] = 1;
  });
  for (int r = 0; r < n_sim; ++r)
    if (failed[r])
      throw DataError("estimate_moments: replicate " + std::to_string(r) +
                      " produced no usable dataset in 10 attempts");
  MomentEstimate out;
  out.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - out.mean.transpose();
  out.cov = centered.transpose() * centered / (n_sim - 1);
  out.n_sim = n_sim;
  out.seed = seed;
  return out;
}

ParamVector default_steps() {
  ParamVector s;
  s << 0.05, 0.05, 0.05, 0.05, 0.1, 0.1;
  return s;
}

JacobianMatrix estimate_jacobian(const model::ModelParams& theta,
                                 const SimConfig& cfg, int n_sim,
                                 std::uint64_t seed, const ParamVector& steps,
                                 int threads) {
  for (int d = 0; d < kNumParams; ++d)
    if (!(steps[d] > 0.0))
      throw std::invalid_argument("estimate_jacobian: steps must be > 0");
  const ParamVector z0 = to_unconstrained(theta);
  JacobianMatrix jac;
  for (int d = 0; d < kNumParams; ++d) {
    double h = steps[d];
    bool done = false;
    for (int shrink = 0; shrink <= 4 && !done; ++shrink) {
      ParamVector zp = z0, zm = z0;
      zp[d] += h;
      zm[d] -= h;
      model::ModelParams tp, tm;
      try {
        tp = from_unconstrained(zp);
        tm = from_unconstrained(zm);
      } catch (const std::invalid_argument&) {
        h *= 0.5;
        continue;
      }
      const MomentEstimate mp = estimate_moments(tp, cfg, n_sim, seed, threads);
      const MomentEstimate mm = estimate_moments(tm, cfg, n_sim, seed, threads);
      jac.col(d) = (mp.mean - mm.mean) / (2.0 * h);
      done = true;
    }
    if (!done)
      throw NumericalError("estimate_jacobian: no feasible step for parameter " +
                           std::to_string(d));
  }
  return jac;
}

Eigen::MatrixXd regularized_solve(const Eigen::MatrixXd& cov,
                                  const Eigen::MatrixXd& rhs) {
  if (cov.rows() != cov.cols() || cov.rows() != rhs.rows())
    throw std::invalid_argument("regularized_solve: dimension mismatch");
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  const auto q = static_cast<double>(sym.rows());
  const double base = sym.trace() / q;
  if (!(base > 0.0) || !std::isfinite(base))
    throw NumericalError("regularized_solve: covariance irreparably singular");
  double eps = 1e-8;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const Eigen::MatrixXd ridged =
        sym + eps * base * Eigen::MatrixXd::Identity(sym.rows(), sym.cols());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ridged);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo > 0.0 && hi / lo < 1e12) return ridged.llt().solve(rhs);
    eps *= 10.0;
  }
  throw NumericalError("regularized_solve: covariance irreparably singular");
}

Eigen::VectorXd quasi_score(const Eigen::MatrixXd& jacobian,
                            const Eigen::MatrixXd& cov,
                            const Eigen::VectorXd& y,
                            const Eigen::VectorXd& mean) {
  if (jacobian.rows() != cov.rows() || y.size() != cov.rows() ||
      mean.size() != cov.rows())
    throw std::invalid_argument("quasi_score: dimension mismatch");
  return jacobian.transpose() * regularized_solve(cov, y - mean);
}

Eigen::MatrixXd quasi_information(const Eigen::MatrixXd& jacobian,
                                  const Eigen::MatrixXd& cov) {
  if (jacobian.rows() != cov.rows())
    throw std::invalid_argument("quasi_information: dimension mismatch");
  const Eigen::MatrixXd m =
      jacobian.transpose() * regularized_solve(cov, jacobian);
  return 0.5 * (m + m.transpose());
}

namespace {

struct ScoringState {
  MomentModel model;
  ParamVector score = ParamVector::Zero();
  InfoMatrix info = InfoMatrix::Zero();
  double deviance = 0.0;
};

ScoringState evaluate_state(const StatsVector& y, const ParamVector& z,
                            const MomentEvaluator& eval) {
  ScoringState st;
  st.model = eval(z);
  st.score = quasi_score(st.model.jacobian, st.model.cov, y, st.model.mean);
  st.info = quasi_information(st.model.jacobian, st.model.cov);
  st.deviance = st.score.dot(regularized_solve(st.info, st.score).col(0));
  return st;
}

}  // namespace

QleFit quasi_scoring_core(const StatsVector& y, const ParamVector& z0,
                          const QleConfig& cfg, const MomentEvaluator& eval) {
  if (cfg.max_iter < 1)
    throw std::invalid_argument("quasi_scoring_core: max_iter must be >= 1");
  if (!(cfg.deviance_tol > 0.0))
    throw std::invalid_argument("quasi_scoring_core: deviance_tol must be > 0");
  if (cfg.max_halvings < 0)
    throw std::invalid_argument("quasi_scoring_core: max_halvings must be >= 0");
  if (!(cfg.max_step_norm > 0.0))
    throw std::invalid_argument("quasi_scoring_core: max_step_norm must be > 0");

  ParamVector z = z0;
  ScoringState cur = evaluate_state(y, z, eval);
  QleFit fit;
  fit.trace.push_back({z, 1.0, cur.score.norm(), cur.deviance});

  int accepted_steps = 0;
  while (accepted_steps < cfg.max_iter && cur.deviance > cfg.deviance_tol) {
    ParamVector delta = regularized_solve(cur.info, cur.score).col(0);
    // Far from the optimum the Gauss-Newton proposal can be enormous and
    // jump into a degenerate corner (saturated correlation, exploded
    // variances) that backtracking alone cannot leave; the trust radius keeps
    // every accepted move local.
    const double delta_norm = delta.norm();
    if (delta_norm > cfg.max_step_norm) delta *= cfg.max_step_norm / delta_norm;
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half <= cfg.max_halvings; ++half) {
      const ParamVector zt = z + t * delta;
      bool usable = true;
      ScoringState trial;
      try {
        trial = evaluate_state(y, zt, eval);
      } catch (const std::exception&) {
        usable = false;
      }
      if (usable && trial.deviance < cur.deviance) {
        z = zt;
        cur = trial;
        accepted = true;
        ++accepted_steps;
        fit.trace.push_back({z, t, cur.score.norm(), cur.deviance});
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      fit.stalled = true;
      break;
    }
  }

  fit.converged = cur.deviance <= cfg.deviance_tol;
  fit.iterations = accepted_steps;
  fit.theta_hat = from_unconstrained(z);
  fit.quasi_info = cur.info;

  const Eigen::MatrixXd cov_z =
      regularized_solve(cur.info, Eigen::MatrixXd::Identity(kNumParams, kNumParams));
  ParamVector scale;
  scale << 1.0, 1.0, fit.theta_hat.sigma1, fit.theta_hat.sigma2,
      1.0 - fit.theta_hat.rho * fit.theta_hat.rho, fit.theta_hat.beta;
  for (int d = 0; d < kNumParams; ++d)
    fit.asymptotic_se[d] = scale[d] * std::sqrt(std::max(0.0, cov_z(d, d)));
  return fit;
}

QleFit quasi_scoring_fit(const StatsVector& y,
                         const model::ModelParams& theta0,
                         const SimConfig& sim_cfg, const QleConfig& cfg) {
  const MomentEvaluator eval = [&](const ParamVector& z) {
    const model::ModelParams p = from_unconstrained(z);
    MomentModel m;
    const MomentEstimate mom =
        estimate_moments(p, sim_cfg, cfg.n_sim, cfg.seed, cfg.threads);
    m.mean = mom.mean;
    m.cov = mom.cov;
    m.jacobian =
        estimate_jacobian(p, sim_cfg, cfg.n_sim, cfg.seed, cfg.steps, cfg.threads);
    return m;
  };
  return quasi_scoring_core(y, to_unconstrained(theta0), cfg, eval);
}

model::ModelParams default_start(const StatsVector& y) {
  model::ModelParams p;
  p.mu1 = y[1];
  p.mu2 = y[2];
  p.sigma1 = std::max(0.05, y[6]);
  p.sigma2 = std::max(0.05, y[8]);
  p.rho = 0.0;
  p.beta = 1.0;
  return p;
}

}  // namespace spherest::qle
