#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "spherest/stats.hpp"

using namespace spherest;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double value : v) x[i++] = value;
  return x;
}

}  // namespace

TEST_CASE("median for odd and even sizes") {
  CHECK(stats::median(vec({3.0, 1.0, 2.0})) == 2.0);
  CHECK(stats::median(vec({4.0, 1.0, 3.0, 2.0})) == 2.5);
  CHECK(stats::median(vec({7.0})) == 7.0);
  CHECK_THROWS_AS(stats::median(Eigen::VectorXd()), std::invalid_argument);
}

TEST_CASE("mad uses the normal-consistency constant") {
  // Deviations from the median 3 are {2,1,0,1,97}; their median is 1.
  CHECK(stats::mad(vec({1.0, 2.0, 3.0, 4.0, 100.0})) ==
        doctest::Approx(1.4826).epsilon(1e-12));
  CHECK(stats::mad(vec({5.0, 5.0, 5.0})) == 0.0);
}

TEST_CASE("mean and variance hand values") {
  CHECK(stats::mean(vec({1.0, 2.0, 3.0, 4.0})) == 2.5);
  CHECK(stats::variance(vec({1.0, 2.0, 3.0, 4.0})) ==
        doctest::Approx(5.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(stats::variance(vec({1.0})), std::invalid_argument);
}

TEST_CASE("pearson_cor endpoints and degeneracy") {
  CHECK(stats::pearson_cor(vec({1.0, 2.0, 3.0}), vec({2.0, 4.0, 6.0})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats::pearson_cor(vec({1.0, 2.0, 3.0}), vec({6.0, 4.0, 2.0})) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(stats::pearson_cor(vec({1.0, 1.0}), vec({1.0, 2.0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(stats::pearson_cor(vec({1.0, 2.0}), vec({1.0})),
                  std::invalid_argument);
}

TEST_CASE("one-sample KS statistic against a reference cdf") {
  const auto uniform_cdf = [](double x) {
    return std::clamp(x, 0.0, 1.0);
  };
  CHECK(stats::ks_statistic(vec({0.5}), uniform_cdf) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(stats::ks_statistic(vec({0.25, 0.75}), uniform_cdf) ==
        doctest::Approx(0.25).epsilon(1e-12));
  // Perfectly placed quantiles: sup distance is half a step.
  CHECK(stats::ks_statistic(vec({0.125, 0.375, 0.625, 0.875}), uniform_cdf) ==
        doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("two-sample KS statistic") {
  CHECK(stats::ks_statistic_two_sample(vec({1.0, 2.0}), vec({3.0, 4.0})) ==
        doctest::Approx(1.0));
  CHECK(stats::ks_statistic_two_sample(vec({1.0, 3.0}), vec({2.0, 4.0})) ==
        doctest::Approx(0.5));
  // Ties advance both empirical cdfs together.
  CHECK(stats::ks_statistic_two_sample(vec({1.0, 2.0}), vec({2.0, 3.0})) ==
        doctest::Approx(0.5));
  CHECK(stats::ks_statistic_two_sample(vec({1.0, 2.0}), vec({1.0, 2.0})) ==
        doctest::Approx(0.0));
}

TEST_CASE("ecdf is right-continuous") {
  const Eigen::VectorXd x = vec({1.0, 2.0, 2.0, 3.0});
  CHECK(stats::ecdf(x, 0.9) == 0.0);
  CHECK(stats::ecdf(x, 1.0) == 0.25);
  CHECK(stats::ecdf(x, 2.0) == 0.75);
  CHECK(stats::ecdf(x, 2.5) == 0.75);
  CHECK(stats::ecdf(x, 3.0) == 1.0);
  CHECK_THROWS_AS(stats::ecdf(Eigen::VectorXd(), 0.0), std::invalid_argument);
}
