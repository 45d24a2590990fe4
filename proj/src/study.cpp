#include "spherest/study.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "spherest/errors.hpp"
#include "spherest/stats.hpp"

namespace spherest::study {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kCmaxHeadroom = 1.25;
constexpr std::uint64_t kKernelSeedBase = 0x100000000ull;
constexpr std::uint64_t kBootstrapSeedIndex = 0x200000000ull;

// One replicate's data: the observed section profiles and a matched-size
// sample of 3D attributes of the typical spheroid.
struct RepData {
  std::vector<sectioning::SectionEllipse> ellipses;
  std::vector<mle::Sample3D> grains;
  std::uint64_t qle_seed = 0;
};

std::vector<mle::Sample3D> sample_typical_grains(
    const model::ModelParams& params, int n, RngStream& rng) {
  std::vector<mle::Sample3D> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const model::SizeShape ss = model::sample_size_shape(params, rng);
    const model::Orientation o = model::sample_orientation(params.beta, rng);
    out.push_back({ss.c, ss.s, o.theta});
  }
  return out;
}

std::string kernel_cache_path(const std::string& dir,
                              const unfold::BinningSpec& spec, long mc_reps,
                              std::uint64_t seed) {
  char name[160];
  std::snprintf(name, sizeof(name), "kernel_%dx%dx%d_c%016llx_r%ld_s%016llx.bin",
                spec.n_c, spec.n_s, spec.n_theta,
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(spec.c_max)),
                mc_reps, static_cast<unsigned long long>(seed));
  return (std::filesystem::path(dir) / name).string();
}

unfold::KernelMatrix cached_kernel(const StudyConfig& cfg,
                                   const unfold::BinningSpec& spec,
                                   std::uint64_t seed) {
  if (!cfg.kernel_cache_dir.empty()) {
    const std::string path =
        kernel_cache_path(cfg.kernel_cache_dir, spec, cfg.kernel_mc_reps, seed);
    if (std::filesystem::exists(path)) {
      try {
        unfold::KernelMatrix k = unfold::load_kernel(path);
        if (k.binning == spec && k.mc_reps == cfg.kernel_mc_reps &&
            k.seed == seed)
          return k;
      } catch (const DataError&) {
        // Corrupt cache entry: fall through and rebuild.
      }
    }
    unfold::KernelMatrix k =
        unfold::estimate_kernel(spec, cfg.kernel_mc_reps, seed, cfg.threads);
    std::filesystem::create_directories(cfg.kernel_cache_dir);
    unfold::save_kernel(path, k);
    return k;
  }
  return unfold::estimate_kernel(spec, cfg.kernel_mc_reps, seed, cfg.threads);
}

std::vector<Eigen::VectorXd> valid_rows(const Eigen::MatrixXd& estimates) {
  std::vector<Eigen::VectorXd> rows;
  for (Eigen::Index r = 0; r < estimates.rows(); ++r)
    if (estimates.row(r).allFinite()) rows.push_back(estimates.row(r));
  return rows;
}

void summarize(MethodResult& method, const Eigen::VectorXd& truth,
               int bootstrap_b, RngStream boot_rng) {
  const std::vector<Eigen::VectorXd> rows = valid_rows(method.estimates);
  method.failures = static_cast<int>(method.estimates.rows()) -
                    static_cast<int>(rows.size());
  if (rows.empty()) {
    method.rmse = Eigen::VectorXd::Constant(truth.size(), kNaN);
    method.bootstrap_se = Eigen::VectorXd::Constant(truth.size(), kNaN);
    return;
  }
  method.rmse = rmse(rows, truth);
  if (rows.size() < 2)
    method.bootstrap_se = Eigen::VectorXd::Constant(truth.size(), kNaN);
  else
    method.bootstrap_se = bootstrap_se_rmse(rows, truth, bootstrap_b, boot_rng);
}

}  // namespace

std::vector<BinningShape> default_binnings() {
  return {{6, 5, 6}, {8, 5, 8}, {12, 7, 10}, {15, 10, 12}, {18, 12, 15}};
}

void StudyConfig::validate() const {
  true_params.validate();
  if (!(lambda_v > 0.0))
    throw std::invalid_argument("StudyConfig: lambda_v must be > 0");
  if (!(window_side > 0.0))
    throw std::invalid_argument("StudyConfig: window_side must be > 0");
  if (n_reps < 2) throw std::invalid_argument("StudyConfig: n_reps must be >= 2");
  if ((run_umle || run_binmle) && binnings.empty())
    throw std::invalid_argument("StudyConfig: no binnings configured");
  for (const BinningShape& b : binnings)
    if (b.n_c < 1 || b.n_s < 1 || b.n_theta < 1)
      throw std::invalid_argument("StudyConfig: invalid binning shape");
  if (run_qle && qle_n_sim < 20)
    throw std::invalid_argument("StudyConfig: qle_n_sim must be >= 20");
  if (kernel_mc_reps < 1)
    throw std::invalid_argument("StudyConfig: kernel_mc_reps must be >= 1");
  if (bootstrap_b < 100)
    throw std::invalid_argument("StudyConfig: bootstrap_b must be >= 100");
}

const MethodResult* StudyResult::find(const std::string& name) const {
  for (const MethodResult& m : methods)
    if (m.name == name) return &m;
  return nullptr;
}

StudyResult run_study(const StudyConfig& cfg) {
  cfg.validate();
  const RngStream master(cfg.master_seed);
  const qle::SimConfig sim_cfg =
      qle::square_window_config(cfg.window_side, cfg.lambda_v);
  const Eigen::VectorXd truth = qle::natural_vector(cfg.true_params);

  StudyResult result;
  result.true_params = cfg.true_params;
  result.section_counts.resize(cfg.n_reps);

  // Draw all replicates up front; every method sees the same data.
  std::vector<RepData> reps(cfg.n_reps);
  for (int r = 0; r < cfg.n_reps; ++r) {
    const RngStream rep_root = master.child(static_cast<std::uint64_t>(r));
    reps[r].ellipses = qle::simulate_dataset(
        cfg.true_params, sim_cfg, rep_root.child(0).base_seed());
    const int n = static_cast<int>(reps[r].ellipses.size());
    result.section_counts[r] = n;
    RngStream grain_rng = rep_root.child(1);
    reps[r].grains = sample_typical_grains(cfg.true_params, n, grain_rng);
    reps[r].qle_seed = rep_root.child(2).base_seed();
  }

  double max_c_2d = 0.0, max_c_3d = 0.0;
  for (const RepData& rep : reps) {
    for (const auto& e : rep.ellipses) max_c_2d = std::max(max_c_2d, e.C);
    for (const auto& g : rep.grains) max_c_3d = std::max(max_c_3d, g.c);
  }
  result.c_max_2d = kCmaxHeadroom * max_c_2d;
  result.c_max_3d = kCmaxHeadroom * max_c_3d;

  const auto run_method =
      [&](const std::string& name,
          const std::function<Eigen::VectorXd(const RepData&)>& fit) {
        MethodResult method;
        method.name = name;
        method.estimates =
            Eigen::MatrixXd::Constant(cfg.n_reps, qle::kNumParams, kNaN);
        for (int r = 0; r < cfg.n_reps; ++r) {
          try {
            method.estimates.row(r) = fit(reps[r]).transpose();
          } catch (const std::exception&) {
            // Failed fit: row stays NaN and is counted below.
          }
        }
        summarize(method, truth, cfg.bootstrap_b,
                  master.child(kBootstrapSeedIndex + result.methods.size()));
        result.methods.push_back(std::move(method));
      };

  if (cfg.run_umle && result.c_max_2d > 0.0) {
    for (std::size_t b = 0; b < cfg.binnings.size(); ++b) {
      const BinningShape& shape = cfg.binnings[b];
      unfold::BinningSpec spec{shape.n_c, shape.n_s, shape.n_theta,
                               result.c_max_2d};
      result.binnings_2d.push_back(spec);
      const std::uint64_t kseed =
          master.child(kKernelSeedBase + b).base_seed();
      const unfold::KernelMatrix kernel = cached_kernel(cfg, spec, kseed);
      run_method("UMLE" + std::to_string(b + 1), [&](const RepData& rep) {
        const unfold::Histogram3D g = unfold::bin_ellipses(rep.ellipses, spec);
        const unfold::EmResult em = unfold::em_unfold(g, kernel);
        const mle::MleFit fit = mle::fit_binned(em.h);
        return qle::natural_vector(fit.params);
      });
    }
  }

  if (cfg.run_qle) {
    run_method("QLE", [&](const RepData& rep) {
      const qle::StatsVector y = qle::compute_statistics(rep.ellipses);
      qle::QleConfig qcfg;
      qcfg.n_sim = cfg.qle_n_sim;
      qcfg.seed = rep.qle_seed;
      qcfg.threads = cfg.threads;
      const qle::QleFit fit =
          qle::quasi_scoring_fit(y, qle::default_start(y), sim_cfg, qcfg);
      return qle::natural_vector(fit.theta_hat);
    });
  }

  if (cfg.run_binmle && result.c_max_3d > 0.0) {
    for (std::size_t b = 0; b < cfg.binnings.size(); ++b) {
      const BinningShape& shape = cfg.binnings[b];
      unfold::BinningSpec spec{shape.n_c, shape.n_s, shape.n_theta,
                               result.c_max_3d};
      result.binnings_3d.push_back(spec);
      run_method("BINMLE" + std::to_string(b + 1), [&](const RepData& rep) {
        std::vector<std::array<double, 3>> triples;
        triples.reserve(rep.grains.size());
        for (const mle::Sample3D& g : rep.grains)
          triples.push_back({g.c, g.s, g.theta});
        const unfold::Histogram3D h = unfold::bin_triples(triples, spec);
        const mle::MleFit fit = mle::fit_binned(h);
        return qle::natural_vector(fit.params);
      });
    }
  }

  if (cfg.run_mle3d) {
    run_method("MLE3D", [&](const RepData& rep) {
      const mle::MleFit fit = mle::fit_mle3d(rep.grains);
      return qle::natural_vector(fit.params);
    });
  }

  return result;
}

Eigen::VectorXd rmse(const std::vector<Eigen::VectorXd>& estimates,
                     const Eigen::VectorXd& truth) {
  if (estimates.empty()) throw std::invalid_argument("rmse: no estimates");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(truth.size());
  for (const Eigen::VectorXd& est : estimates) {
    if (est.size() != truth.size())
      throw std::invalid_argument("rmse: dimension mismatch");
    acc += (est - truth).cwiseAbs2();
  }
  return (acc / static_cast<double>(estimates.size())).cwiseSqrt();
}

Eigen::VectorXd bootstrap_se_rmse(const std::vector<Eigen::VectorXd>& estimates,
                                  const Eigen::VectorXd& truth, int b,
                                  RngStream& rng) {
  if (estimates.size() < 2)
    throw std::invalid_argument("bootstrap_se_rmse: need >= 2 estimates");
  if (b < 100)
    throw std::invalid_argument("bootstrap_se_rmse: need >= 100 resamples");
  const std::size_t n = estimates.size();
  Eigen::MatrixXd values(b, truth.size());
  std::vector<Eigen::VectorXd> resample(n);
  for (int rep = 0; rep < b; ++rep) {
    for (std::size_t i = 0; i < n; ++i) resample[i] = estimates[rng.below(n)];
    values.row(rep) = rmse(resample, truth).transpose();
  }
  const Eigen::RowVectorXd mean = values.colwise().mean();
  Eigen::VectorXd out(truth.size());
  for (Eigen::Index j = 0; j < truth.size(); ++j)
    out[j] = std::sqrt((values.col(j).array() - mean[j]).square().sum() /
                       (b - 1.0));
  return out;
}

double ks_test_mc(const std::vector<double>& values, const ModelSampler& sampler,
                  int m, RngStream& rng) {
  if (values.empty()) throw DataError("ks_test_mc: empty data");
  if (m < 19) throw std::invalid_argument("ks_test_mc: m must be >= 19");

  std::vector<Eigen::VectorXd> sets(m + 1);
  sets[0] = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                              static_cast<Eigen::Index>(values.size()));
  for (int i = 0; i < m; ++i) {
    RngStream child = rng.child(static_cast<std::uint64_t>(i));
    const std::vector<double> sim = sampler(child);
    if (sim.empty()) throw DataError("ks_test_mc: sampler produced empty data");
    sets[i + 1] = Eigen::Map<const Eigen::VectorXd>(
        sim.data(), static_cast<Eigen::Index>(sim.size()));
  }

  Eigen::Index total = 0;
  for (const auto& s : sets) total += s.size();
  // Each dataset is scored against the pool of all others; the m+1 scores
  // are exchangeable when the data follow the model.
  std::vector<double> score(m + 1);
  for (int j = 0; j <= m; ++j) {
    Eigen::VectorXd pool(total - sets[j].size());
    Eigen::Index at = 0;
    for (int i = 0; i <= m; ++i) {
      if (i == j) continue;
      pool.segment(at, sets[i].size()) = sets[i];
      at += sets[i].size();
    }
    score[j] = stats::ks_statistic_two_sample(sets[j], pool);
  }
  int exceed = 0;
  for (int i = 1; i <= m; ++i)
    if (score[i] >= score[0]) ++exceed;
  return (1.0 + exceed) / (m + 1.0);
}

EnvelopeResult envelope_cdf(const std::vector<double>& values,
                            const ModelSampler& sampler, int m,
                            const std::vector<double>& grid, RngStream& rng) {
  if (values.empty()) throw DataError("envelope_cdf: empty data");
  if (m < 1) throw std::invalid_argument("envelope_cdf: m must be >= 1");
  if (grid.empty()) throw std::invalid_argument("envelope_cdf: empty grid");

  const auto n_grid = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd curves(m, n_grid);
  for (int i = 0; i < m; ++i) {
    RngStream child = rng.child(static_cast<std::uint64_t>(i));
    const std::vector<double> sim = sampler(child);
    if (sim.empty()) throw DataError("envelope_cdf: sampler produced empty data");
    const Eigen::VectorXd sample = Eigen::Map<const Eigen::VectorXd>(
        sim.data(), static_cast<Eigen::Index>(sim.size()));
    for (Eigen::Index g = 0; g < n_grid; ++g)
      curves(i, g) = stats::ecdf(sample, grid[g]);
  }

  // Nearest-rank quantile over the m simulated curves, pointwise.
  const auto rank_of = [m](double p) {
    const int r = static_cast<int>(std::ceil(p * m));
    return std::clamp(r, 1, m) - 1;
  };
  const int lo_rank = rank_of(0.025);
  const int hi_rank = rank_of(0.975);

  EnvelopeResult out;
  out.grid = grid;
  out.lower.resize(n_grid);
  out.upper.resize(n_grid);
  out.empirical.resize(n_grid);
  const Eigen::VectorXd data = Eigen::Map<const Eigen::VectorXd>(
      values.data(), static_cast<Eigen::Index>(values.size()));
  std::vector<double> column(m);
  for (Eigen::Index g = 0; g < n_grid; ++g) {
    for (int i = 0; i < m; ++i) column[i] = curves(i, g);
    std::sort(column.begin(), column.end());
    out.lower[g] = column[lo_rank];
    out.upper[g] = column[hi_rank];
    out.empirical[g] = stats::ecdf(data, grid[g]);
  }
  return out;
}

}  // namespace spherest::study
