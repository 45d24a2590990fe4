#include <cmath>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "spherest/errors.hpp"
#include "spherest/rng.hpp"
#include "spherest/stats.hpp"
#include "spherest/study.hpp"

using namespace spherest;

namespace {

study::StudyConfig small_config() {
  study::StudyConfig cfg;
  cfg.true_params.mu1 = -2.15;
  cfg.true_params.mu2 = 0.55;
  cfg.true_params.sigma1 = 0.35;
  cfg.true_params.sigma2 = 0.3;
  cfg.window_side = 5.0;
  cfg.n_reps = 2;
  cfg.binnings = {{6, 5, 6}};
  cfg.kernel_mc_reps = 3000;
  cfg.qle_n_sim = 20;
  cfg.bootstrap_b = 100;
  cfg.master_seed = 7;
  return cfg;
}

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v << x;
  return v;
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("default_binnings lists the five presets coarse to fine") {
  const auto b = study::default_binnings();
  REQUIRE(b.size() == 5);
  const int want[5][3] = {
      {6, 5, 6}, {8, 5, 8}, {12, 7, 10}, {15, 10, 12}, {18, 12, 15}};
  for (int i = 0; i < 5; ++i) {
    CHECK(b[i].n_c == want[i][0]);
    CHECK(b[i].n_s == want[i][1]);
    CHECK(b[i].n_theta == want[i][2]);
  }
}

TEST_CASE("StudyConfig validation") {
  study::StudyConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());

  cfg = small_config();
  cfg.n_reps = 1;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("n_reps"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.lambda_v = 0.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("lambda_v"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.window_side = -1.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("window_side"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.binnings.clear();
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("binnings"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.binnings = {{0, 5, 6}};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("binning shape"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.qle_n_sim = 19;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("qle_n_sim"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.kernel_mc_reps = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("kernel_mc_reps"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.bootstrap_b = 99;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("bootstrap_b"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.true_params.rho = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("rmse componentwise") {
  Eigen::VectorXd truth(2);
  truth << 2.0, 3.0;
  Eigen::VectorXd e1(2), e2(2);
  e1 << 1.0, 2.0;
  e2 << 3.0, 4.0;
  const Eigen::VectorXd r = study::rmse({e1, e2}, truth);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 1.0);

  CHECK(study::rmse({vec1(5.0)}, vec1(3.0))[0] == 2.0);
  CHECK_THROWS_AS(study::rmse({}, truth), std::invalid_argument);
  CHECK_THROWS_AS(study::rmse({vec1(0.0)}, truth), std::invalid_argument);
}

TEST_CASE("bootstrap_se_rmse") {
  SUBCASE("symmetric pair has constant resampled rmse") {
    RngStream rng(101);
    const Eigen::VectorXd se = study::bootstrap_se_rmse(
        {vec1(1.0), vec1(-1.0)}, vec1(0.0), 200, rng);
    CHECK(se[0] == 0.0);
  }

  SUBCASE("closed-form spread of a two-point sample") {
    // Resamples of {2, 0} around truth 0 give rmse 2, sqrt(2), 0 with
    // probabilities 1/4, 1/2, 1/4; the sd of that law is 0.73681...
    RngStream rng(102);
    const Eigen::VectorXd se = study::bootstrap_se_rmse(
        {vec1(2.0), vec1(0.0)}, vec1(0.0), 20000, rng);
    CHECK(se[0] == doctest::Approx(0.7368128791039503).epsilon(0.02));
  }

  SUBCASE("identical estimates give zero spread") {
    RngStream rng(103);
    const Eigen::VectorXd se = study::bootstrap_se_rmse(
        {vec1(1.4), vec1(1.4), vec1(1.4)}, vec1(0.0), 150, rng);
    CHECK(se[0] < 1e-12);
  }

  SUBCASE("scales like the inverse root of the number of estimates") {
    // A single pool's bootstrap spread is itself noisy, so compare averages
    // over independent pools.
    const auto mean_se = [](int n, std::uint64_t seed) {
      RngStream root(seed);
      double acc = 0.0;
      const int pools = 15;
      for (int k = 0; k < pools; ++k) {
        RngStream draw = root.child(2 * k);
        RngStream boot = root.child(2 * k + 1);
        std::vector<Eigen::VectorXd> pool;
        for (int i = 0; i < n; ++i) pool.push_back(vec1(draw.normal()));
        acc += study::bootstrap_se_rmse(pool, vec1(0.0), 2000, boot)[0];
      }
      return acc / pools;
    };
    const double s10 = mean_se(10, 105);
    const double s40 = mean_se(40, 106);
    const double s160 = mean_se(160, 107);
    CHECK(s40 / s10 > 0.35);
    CHECK(s40 / s10 < 0.65);
    CHECK(s160 / s40 > 0.35);
    CHECK(s160 / s40 < 0.65);
  }

  SUBCASE("guards") {
    RngStream rng(108);
    CHECK_THROWS_AS(
        study::bootstrap_se_rmse({vec1(1.0)}, vec1(0.0), 200, rng),
        std::invalid_argument);
    CHECK_THROWS_AS(study::bootstrap_se_rmse({vec1(1.0), vec1(2.0)},
                                             vec1(0.0), 99, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("ks_test_mc") {
  const study::ModelSampler normal30 = [](RngStream& r) {
    std::vector<double> v(30);
    for (double& x : v) x = r.normal();
    return v;
  };

  SUBCASE("data far outside the model gets the smallest attainable p") {
    RngStream rng(111);
    const std::vector<double> values = {100.0, 101.0, 102.0, 103.0, 104.0};
    CHECK(study::ks_test_mc(values, normal30, 19, rng) == 0.05);
  }

  SUBCASE("p-values live on the lattice k / (m + 1)") {
    RngStream rng(112);
    RngStream data_rng(113);
    const std::vector<double> values = normal30(data_rng);
    for (int m : {19, 39}) {
      const double p = study::ks_test_mc(values, normal30, m, rng);
      const double k = p * (m + 1);
      CHECK(std::abs(k - std::round(k)) < 1e-9);
      CHECK(p >= 1.0 / (m + 1) - 1e-12);
      CHECK(p <= 1.0 + 1e-12);
    }
  }

  SUBCASE("roughly calibrated under the null") {
    RngStream rng(114);
    int small_p = 0;
    const int reps = 40;
    for (int rep = 0; rep < reps; ++rep) {
      RngStream data_rng = rng.child(2 * rep);
      RngStream mc_rng = rng.child(2 * rep + 1);
      const std::vector<double> values = normal30(data_rng);
      if (study::ks_test_mc(values, normal30, 19, mc_rng) <= 0.5) ++small_p;
    }
    CHECK(small_p >= reps / 4);
    CHECK(small_p <= 3 * reps / 4);
  }

  SUBCASE("guards") {
    RngStream rng(115);
    CHECK_THROWS_AS(study::ks_test_mc({}, normal30, 19, rng), DataError);
    CHECK_THROWS_AS(study::ks_test_mc({1.0}, normal30, 18, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("envelope_cdf") {
  SUBCASE("single simulation collapses the band onto its own cdf") {
    RngStream rng(121);
    const study::ModelSampler fixed = [](RngStream&) {
      return std::vector<double>{1.0, 2.0, 3.0};
    };
    const std::vector<double> grid = {0.5, 1.5, 2.5, 3.5};
    const auto env =
        study::envelope_cdf({1.5, 2.5}, fixed, 1, grid, rng);
    REQUIRE(env.grid.size() == 4);
    const double want[4] = {0.0, 1.0 / 3, 2.0 / 3, 1.0};
    for (int g = 0; g < 4; ++g) {
      CHECK(env.lower[g] == want[g]);
      CHECK(env.upper[g] == want[g]);
    }
    CHECK(env.empirical[0] == 0.0);
    CHECK(env.empirical[1] == 0.5);
    CHECK(env.empirical[2] == 1.0);
  }

  SUBCASE("band ordering, monotonicity and self-coverage") {
    const int n = 200;
    const study::ModelSampler sampler = [n](RngStream& r) {
      std::vector<double> v(n);
      for (double& x : v) x = r.normal();
      return v;
    };
    RngStream data_rng(122);
    std::vector<double> values(n);
    for (double& x : values) x = data_rng.normal();
    std::vector<double> grid;
    for (int g = 0; g <= 20; ++g) grid.push_back(-2.5 + 0.25 * g);

    RngStream rng(123);
    const auto env = study::envelope_cdf(values, sampler, 200, grid, rng);
    int covered = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      CHECK(env.lower[g] <= env.upper[g]);
      if (g > 0) {
        CHECK(env.lower[g] >= env.lower[g - 1]);
        CHECK(env.upper[g] >= env.upper[g - 1]);
      }
      if (env.empirical[g] >= env.lower[g] - 1e-12 &&
          env.empirical[g] <= env.upper[g] + 1e-12)
        ++covered;
    }
    CHECK(covered >= int(0.9 * double(grid.size())));
  }

  SUBCASE("guards") {
    RngStream rng(124);
    const study::ModelSampler fixed = [](RngStream&) {
      return std::vector<double>{1.0};
    };
    CHECK_THROWS_AS(study::envelope_cdf({}, fixed, 10, {0.0}, rng), DataError);
    CHECK_THROWS_AS(study::envelope_cdf({1.0}, fixed, 0, {0.0}, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(study::envelope_cdf({1.0}, fixed, 10, {}, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("run_study smoke test with every method enabled") {
  const study::StudyConfig cfg = small_config();
  const study::StudyResult res = study::run_study(cfg);

  REQUIRE(res.methods.size() == 4);
  REQUIRE(res.find("UMLE1") != nullptr);
  REQUIRE(res.find("QLE") != nullptr);
  REQUIRE(res.find("BINMLE1") != nullptr);
  REQUIRE(res.find("MLE3D") != nullptr);
  CHECK(res.find("UMLE2") == nullptr);

  CHECK(res.section_counts.size() == 2);
  CHECK(res.section_counts.minCoeff() > 0);
  CHECK(res.c_max_2d > 0.0);
  CHECK(res.c_max_3d > 0.0);
  REQUIRE(res.binnings_2d.size() == 1);
  CHECK(res.binnings_2d[0].c_max == res.c_max_2d);
  REQUIRE(res.binnings_3d.size() == 1);
  CHECK(res.binnings_3d[0].c_max == res.c_max_3d);

  for (const auto& method : res.methods) {
    CAPTURE(method.name);
    CHECK(method.estimates.rows() == 2);
    CHECK(method.estimates.cols() == 6);
    CHECK(method.failures >= 0);
    CHECK(method.failures <= 2);
    for (int r = 0; r < 2; ++r) {
      const bool finite = method.estimates.row(r).allFinite();
      const bool all_nan = method.estimates.row(r).array().isNaN().all();
      CHECK((finite || all_nan));
    }
    if (method.failures == 0) {
      CHECK(method.rmse.allFinite());
      CHECK(method.bootstrap_se.allFinite());
      CHECK(method.rmse.minCoeff() >= 0.0);
    }
  }

  // The direct 3D fit sees the generating sample untouched, so its size
  // location error is small even with two replicates.
  const auto* mle3d = res.find("MLE3D");
  REQUIRE(mle3d->failures == 0);
  CHECK(mle3d->rmse[0] < 0.5);
}

TEST_CASE("run_study is reproducible and reuses the kernel cache") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "spherest_test_study_cache";
  fs::remove_all(dir);

  study::StudyConfig cfg = small_config();
  cfg.run_qle = false;  // fastest deterministic subset
  cfg.kernel_mc_reps = 2000;
  cfg.master_seed = 8;
  cfg.kernel_cache_dir = dir.string();

  const study::StudyResult r1 = study::run_study(cfg);
  CHECK(fs::exists(dir));
  int cache_files = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    (void)entry;
    ++cache_files;
  }
  CHECK(cache_files == 1);

  const study::StudyResult r2 = study::run_study(cfg);
  CHECK(r1.section_counts == r2.section_counts);
  CHECK(r1.c_max_2d == r2.c_max_2d);
  CHECK(r1.c_max_3d == r2.c_max_3d);
  REQUIRE(r1.methods.size() == r2.methods.size());
  for (std::size_t i = 0; i < r1.methods.size(); ++i) {
    CHECK(r1.methods[i].name == r2.methods[i].name);
    CHECK(same_bits(r1.methods[i].estimates, r2.methods[i].estimates));
    CHECK(same_bits(r1.methods[i].rmse, r2.methods[i].rmse));
    CHECK(same_bits(r1.methods[i].bootstrap_se, r2.methods[i].bootstrap_se));
    CHECK(r1.methods[i].failures == r2.methods[i].failures);
  }

  fs::remove_all(dir);
}
