#pragma once

#include <Eigen/Dense>
#include <functional>

namespace spherest::stats {

// Sample median; input is copied, not modified.
double median(const Eigen::VectorXd& x);

// Median absolute deviation scaled by 1.4826 so it is consistent for the
// normal standard deviation.
double mad(const Eigen::VectorXd& x);

double mean(const Eigen::VectorXd& x);
double variance(const Eigen::VectorXd& x);  // denominator n-1

double pearson_cor(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// sup_x |F_n(x) - F(x)| against a reference cdf.
double ks_statistic(const Eigen::VectorXd& sample,
                    const std::function<double(double)>& cdf);

// Two-sample sup-distance between empirical cdfs.
double ks_statistic_two_sample(const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b);

// Empirical cdf of `sample` evaluated at x (right-continuous, P(X <= x)).
double ecdf(const Eigen::VectorXd& sample, double x);

}  // namespace spherest::stats
