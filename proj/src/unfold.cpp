#include "spherest/unfold.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "spherest/errors.hpp"
#include "spherest/parallel.hpp"
#include "spherest/rng.hpp"

namespace spherest::unfold {

namespace {

constexpr double kPi = std::numbers::pi;

// Right-closed equidistant bin index on (0, n*width]; the first bin also
// takes the lower endpoint.
int right_closed_index(double x, double width, int n) {
  int i = static_cast<int>(std::floor(x / width));
  if (i > 0 && x <= i * width) --i;
  return std::clamp(i, 0, n - 1);
}

}  // namespace

void BinningSpec::validate() const {
  if (n_c < 1 || n_s < 1 || n_theta < 1)
    throw std::invalid_argument("BinningSpec: bin counts must be >= 1");
  if (!(c_max > 0.0))
    throw std::invalid_argument("BinningSpec: c_max must be > 0");
}

double BinningSpec::c_edge(int i) const { return c_max * i / n_c; }
double BinningSpec::s_edge(int j) const { return static_cast<double>(j) / n_s; }
double BinningSpec::theta_edge(int k) const { return 0.5 * kPi * k / n_theta; }

int BinningSpec::index_c(double c) const {
  return right_closed_index(c, c_max / n_c, n_c);
}
int BinningSpec::index_s(double s) const {
  return right_closed_index(s, 1.0 / n_s, n_s);
}
int BinningSpec::index_theta(double theta) const {
  return right_closed_index(theta, 0.5 * kPi / n_theta, n_theta);
}

Histogram3D Histogram3D::as_normalized() const {
  Histogram3D out = *this;
  const double t = total();
  if (t > 0.0) out.values /= t;
  out.normalized = true;
  return out;
}

Eigen::VectorXd Histogram3D::theta_marginal() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(binning.n_theta);
  for (int i = 0; i < binning.n_c; ++i)
    for (int j = 0; j < binning.n_s; ++j)
      for (int k = 0; k < binning.n_theta; ++k)
        m(k) += values(binning.flat_index(i, j, k));
  return m;
}

Eigen::MatrixXd Histogram3D::cs_marginal() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(binning.n_c, binning.n_s);
  for (int i = 0; i < binning.n_c; ++i)
    for (int j = 0; j < binning.n_s; ++j)
      for (int k = 0; k < binning.n_theta; ++k)
        m(i, j) += values(binning.flat_index(i, j, k));
  return m;
}

Histogram3D bin_triples(const std::vector<std::array<double, 3>>& triples,
                        const BinningSpec& binning) {
  binning.validate();
  Histogram3D h(binning);
  for (std::size_t l = 0; l < triples.size(); ++l) {
    const auto& [c, s, theta] = triples[l];
    if (!(c > 0.0) || c > binning.c_max)
      throw DataError("record " + std::to_string(l) + ": size " +
                      std::to_string(c) + " outside (0, " +
                      std::to_string(binning.c_max) + "]");
    if (!(s > 0.0) || s > 1.0)
      throw DataError("record " + std::to_string(l) + ": shape " +
                      std::to_string(s) + " outside (0, 1]");
    if (!(theta >= 0.0) || theta > 0.5 * kPi + 1e-12)
      throw DataError("record " + std::to_string(l) + ": angle " +
                      std::to_string(theta) + " outside [0, pi/2]");
    h.values(binning.flat_index(binning.index_c(c), binning.index_s(s),
                                binning.index_theta(theta))) += 1.0;
  }
  return h;
}

Histogram3D bin_ellipses(const std::vector<sectioning::SectionEllipse>& ellipses,
                         const BinningSpec& binning) {
  std::vector<std::array<double, 3>> triples;
  triples.reserve(ellipses.size());
  for (const auto& e : ellipses) triples.push_back({e.C, e.S, e.alpha});
  return bin_triples(triples, binning);
}

KernelMatrix estimate_kernel(const BinningSpec& binning, long mc_reps,
                             std::uint64_t seed, int threads) {
  binning.validate();
  if (mc_reps < 1)
    throw std::invalid_argument("estimate_kernel: mc_reps must be >= 1");
  const int n = binning.classes();
  KernelMatrix kernel;
  kernel.binning = binning;
  kernel.entries = Eigen::MatrixXd::Zero(n, n);
  kernel.entry_se = Eigen::MatrixXf::Zero(n, n);
  kernel.mc_reps = mc_reps;
  kernel.seed = seed;

  const RngStream root(seed);
  const auto plane = sectioning::vertical_plane();

  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t col) {
    const int i = static_cast<int>(col) / (binning.n_s * binning.n_theta);
    const int j = (static_cast<int>(col) / binning.n_theta) % binning.n_s;
    const int k = static_cast<int>(col) % binning.n_theta;
    RngStream rng = root.child(col);

    Eigen::VectorXd sum_w = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sum_w2 = Eigen::VectorXd::Zero(n);
    for (long rep = 0; rep < mc_reps; ++rep) {
      const double c = rng.uniform(binning.c_edge(i), binning.c_edge(i + 1));
      const double s = rng.uniform(binning.s_edge(j), binning.s_edge(j + 1));
      const double theta =
          rng.uniform(binning.theta_edge(k), binning.theta_edge(k + 1));
      const double phi = rng.uniform(0.0, 2.0 * kPi);

      simulate::Spheroid sp;
      sp.a = c / s;
      sp.c = c;
      sp.axis = simulate::orientation_axis({theta, phi});
      // The plane offset is drawn over the spheroid's own support interval
      // and the profile weighted by its width, so the entry estimates the
      // expected profile count per unit length of plane sampling.
      const double hw = sectioning::half_width(sp, plane.v);
      sp.center = Eigen::Vector3d(rng.uniform(-hw, hw), 0.0, 0.0);
      const auto ellipse = sectioning::intersect(sp, plane);
      if (!ellipse) continue;  // tangency band, measure zero
      const int obs = binning.flat_index(binning.index_c(ellipse->C),
                                         binning.index_s(ellipse->S),
                                         binning.index_theta(ellipse->alpha));
      const double w = 2.0 * hw;
      sum_w(obs) += w;
      sum_w2(obs) += w * w;
    }
    for (int row = 0; row < n; ++row) {
      const double mean = sum_w(row) / mc_reps;
      kernel.entries(row, col) = mean;
      const double var = std::max(0.0, sum_w2(row) / mc_reps - mean * mean);
      kernel.entry_se(row, col) = static_cast<float>(std::sqrt(var / mc_reps));
    }
  });
  return kernel;
}

namespace {

constexpr char kKernelMagic[8] = {'S', 'P', 'H', 'K', 'R', 'N', '0', '1'};

}  // namespace

void save_kernel(const std::string& path, const KernelMatrix& kernel) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out.write(kKernelMagic, sizeof(kKernelMagic));
    const std::int64_t dims[3] = {kernel.binning.n_c, kernel.binning.n_s,
                                  kernel.binning.n_theta};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(&kernel.binning.c_max),
              sizeof(double));
    const std::int64_t reps = kernel.mc_reps;
    out.write(reinterpret_cast<const char*>(&reps), sizeof(reps));
    out.write(reinterpret_cast<const char*>(&kernel.seed), sizeof(kernel.seed));
    const std::int64_t n = kernel.entries.rows();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(kernel.entries.data()),
              static_cast<std::streamsize>(sizeof(double) * n * n));
    out.write(reinterpret_cast<const char*>(kernel.entry_se.data()),
              static_cast<std::streamsize>(sizeof(float) * n * n));
    if (!out) throw DataError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

KernelMatrix load_kernel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open kernel cache " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kKernelMagic, sizeof(magic)) != 0)
    throw DataError(path + ": not a kernel cache file");
  KernelMatrix kernel;
  std::int64_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  kernel.binning.n_c = static_cast<int>(dims[0]);
  kernel.binning.n_s = static_cast<int>(dims[1]);
  kernel.binning.n_theta = static_cast<int>(dims[2]);
  in.read(reinterpret_cast<char*>(&kernel.binning.c_max), sizeof(double));
  std::int64_t reps;
  in.read(reinterpret_cast<char*>(&reps), sizeof(reps));
  kernel.mc_reps = reps;
  in.read(reinterpret_cast<char*>(&kernel.seed), sizeof(kernel.seed));
  std::int64_t n;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != kernel.binning.classes())
    throw DataError(path + ": corrupt kernel cache header");
  kernel.entries.resize(n, n);
  kernel.entry_se.resize(n, n);
  in.read(reinterpret_cast<char*>(kernel.entries.data()),
          static_cast<std::streamsize>(sizeof(double) * n * n));
  in.read(reinterpret_cast<char*>(kernel.entry_se.data()),
          static_cast<std::streamsize>(sizeof(float) * n * n));
  if (!in) throw DataError(path + ": truncated kernel cache");
  return kernel;
}

EmResult em_unfold(const Histogram3D& g, const KernelMatrix& kernel,
                   int max_iter, double rel_tol) {
  if (!(g.binning == kernel.binning))
    throw std::invalid_argument("em_unfold: histogram and kernel binnings differ");
  if (g.normalized)
    throw std::invalid_argument("em_unfold: g must hold raw counts");
  const int n = g.binning.classes();
  const Eigen::MatrixXd& a = kernel.entries;
  const Eigen::VectorXd& counts = g.values;

  const Eigen::VectorXd col_sums = a.colwise().sum();
  for (int row = 0; row < n; ++row)
    if (counts(row) > 0.0 && a.row(row).maxCoeff() <= 0.0)
      throw NumericalError("kernel cannot explain observation in class " +
                           std::to_string(row));

  // Shepp-Vardi EM for counts(row) ~ Poisson((A x)(row)); the normalized x
  // estimates the number-weighted class frequencies of the typical spheroid.
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  for (int j = 0; j < n; ++j)
    if (col_sums(j) <= 0.0) x(j) = 0.0;

  const auto loglik_of = [&](const Eigen::VectorXd& mu) {
    double ll = 0.0;
    for (int row = 0; row < n; ++row) {
      if (counts(row) > 0.0)
        ll += counts(row) * std::log(std::max(mu(row), 1e-300));
      ll -= mu(row);
    }
    return ll;
  };

  EmResult result;
  Eigen::VectorXd mu = a * x;
  double ll = loglik_of(mu);
  result.loglik_trace.push_back(ll);
  Eigen::VectorXd ratio(n);
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    for (int row = 0; row < n; ++row)
      ratio(row) = mu(row) > 0.0 ? counts(row) / mu(row) : 0.0;
    const Eigen::VectorXd back = a.transpose() * ratio;
    for (int j = 0; j < n; ++j)
      if (col_sums(j) > 0.0) x(j) *= back(j) / col_sums(j);
    mu.noalias() = a * x;
    const double next = loglik_of(mu);
    if (next < ll - 1e-10 * (1.0 + std::abs(ll)))
      throw NumericalError("EM log-likelihood decreased");
    result.loglik_trace.push_back(next);
    const bool done = std::abs(next - ll) < rel_tol * (std::abs(ll) + 1.0);
    ll = next;
    if (done) {
      ++iter;
      break;
    }
  }

  result.h.binning = g.binning;
  result.h.values = x;
  const double total = x.sum();
  if (total > 0.0) result.h.values /= total;
  result.h.normalized = true;
  result.iterations = iter;
  result.loglik = ll;
  return result;
}

}  // namespace spherest::unfold
