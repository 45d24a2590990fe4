#include "spherest/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace spherest::stats {

namespace {

std::vector<double> sorted(const Eigen::VectorXd& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  return v;
}

double median_sorted(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n == 0) throw std::invalid_argument("median: empty sample");
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double median(const Eigen::VectorXd& x) { return median_sorted(sorted(x)); }

double mad(const Eigen::VectorXd& x) {
  const double m = median(x);
  Eigen::VectorXd dev = (x.array() - m).abs();
  return 1.4826 * median(dev);
}

double mean(const Eigen::VectorXd& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty sample");
  return x.mean();
}

double variance(const Eigen::VectorXd& x) {
  const auto n = x.size();
  if (n < 2) throw std::invalid_argument("variance: need at least 2 values");
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(n - 1);
}

double pearson_cor(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("pearson_cor: size mismatch");
  if (x.size() < 2)
    throw std::invalid_argument("pearson_cor: need at least 2 pairs");
  const double mx = x.mean();
  const double my = y.mean();
  const Eigen::ArrayXd dx = x.array() - mx;
  const Eigen::ArrayXd dy = y.array() - my;
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0)
    throw std::invalid_argument("pearson_cor: zero variance");
  return dx.cwiseProduct(dy).sum() / std::sqrt(sxx * syy);
}

double ks_statistic(const Eigen::VectorXd& sample,
                    const std::function<double(double)>& cdf) {
  const auto v = sorted(sample);
  const double n = static_cast<double>(v.size());
  if (v.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double F = cdf(v[i]);
    d = std::max(d, std::abs(F - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - F));
  }
  return d;
}

double ks_statistic_two_sample(const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b) {
  const auto va = sorted(a);
  const auto vb = sorted(b);
  if (va.empty() || vb.empty())
    throw std::invalid_argument("ks_statistic_two_sample: empty sample");
  const double na = static_cast<double>(va.size());
  const double nb = static_cast<double>(vb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < va.size() && j < vb.size()) {
    const double x = std::min(va[i], vb[j]);
    while (i < va.size() && va[i] <= x) ++i;
    while (j < vb.size() && vb[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

double ecdf(const Eigen::VectorXd& sample, double x) {
  if (sample.size() == 0) throw std::invalid_argument("ecdf: empty sample");
  long count = 0;
  for (Eigen::Index i = 0; i < sample.size(); ++i)
    if (sample(i) <= x) ++count;
  return static_cast<double>(count) / static_cast<double>(sample.size());
}

}  // namespace spherest::stats
