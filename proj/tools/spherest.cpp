#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spherest/errors.hpp"
#include "spherest/io.hpp"
#include "spherest/mle.hpp"
#include "spherest/model.hpp"
#include "spherest/qle.hpp"
#include "spherest/sectioning.hpp"
#include "spherest/simulate.hpp"
#include "spherest/study.hpp"
#include "spherest/unfold.hpp"

namespace {

using nlohmann::json;
using namespace spherest;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

json load_config(const std::string& path) {
  const std::string text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw ConfigError("unknown key '" + item.key() + "' in " + context);
  }
}

const json& require(const json& j, const char* key, const std::string& context) {
  const auto it = j.find(key);
  if (it == j.end())
    throw ConfigError("missing key '" + std::string(key) + "' in " + context);
  return *it;
}

double as_double(const json& j, const std::string& context) {
  if (!j.is_number()) throw ConfigError(context + ": expected a number");
  return j.get<double>();
}

long as_integer(const json& j, const std::string& context) {
  if (!j.is_number_integer()) throw ConfigError(context + ": expected an integer");
  return j.get<long>();
}

std::uint64_t as_seed(const json& j, const std::string& context) {
  if (!j.is_number_unsigned() && !j.is_number_integer())
    throw ConfigError(context + ": expected an integer");
  return j.get<std::uint64_t>();
}

bool as_bool(const json& j, const std::string& context) {
  if (!j.is_boolean()) throw ConfigError(context + ": expected a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& context) {
  if (!j.is_string()) throw ConfigError(context + ": expected a string");
  return j.get<std::string>();
}

double get_double(const json& j, const char* key, const std::string& context) {
  return as_double(require(j, key, context), context + "." + key);
}

double get_double_or(const json& j, const char* key, double fallback,
                     const std::string& context) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : as_double(*it, context + "." + key);
}

long get_integer_or(const json& j, const char* key, long fallback,
                    const std::string& context) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : as_integer(*it, context + "." + key);
}

std::uint64_t get_seed_or(const json& j, const char* key, std::uint64_t fallback,
                          const std::string& context) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : as_seed(*it, context + "." + key);
}

std::string get_string(const json& j, const char* key, const std::string& context) {
  return as_string(require(j, key, context), context + "." + key);
}

std::string get_string_or(const json& j, const char* key,
                          const std::string& fallback, const std::string& context) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : as_string(*it, context + "." + key);
}

Eigen::Vector3d parse_vec3(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(context + ": expected an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v[i] = as_double(j[i], context);
  return v;
}

model::ModelParams parse_params(const json& j, const std::string& context) {
  check_keys(j, {"mu1", "mu2", "sigma1", "sigma2", "rho", "beta"}, context);
  model::ModelParams p;
  p.mu1 = get_double(j, "mu1", context);
  p.mu2 = get_double(j, "mu2", context);
  p.sigma1 = get_double(j, "sigma1", context);
  p.sigma2 = get_double(j, "sigma2", context);
  p.rho = get_double(j, "rho", context);
  p.beta = get_double(j, "beta", context);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(context + ": " + e.what());
  }
  return p;
}

simulate::BoxWindow parse_window(const json& j, const std::string& context) {
  check_keys(j, {"origin", "edges"}, context);
  simulate::BoxWindow w;
  w.origin = parse_vec3(require(j, "origin", context), context + ".origin");
  w.edges = parse_vec3(require(j, "edges", context), context + ".edges");
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(context + ": " + e.what());
  }
  return w;
}

sectioning::Rect2 parse_rect(const json& j, const std::string& context) {
  check_keys(j, {"x_lo", "x_hi", "y_lo", "y_hi"}, context);
  sectioning::Rect2 r{get_double(j, "x_lo", context), get_double(j, "x_hi", context),
                      get_double(j, "y_lo", context), get_double(j, "y_hi", context)};
  if (!(r.x_lo < r.x_hi) || !(r.y_lo < r.y_hi))
    throw ConfigError(context + ": rectangle has empty extent");
  return r;
}

unfold::BinningSpec parse_binning(const json& j, const std::string& context) {
  check_keys(j, {"n_c", "n_s", "n_theta", "c_max"}, context);
  unfold::BinningSpec b;
  b.n_c = static_cast<int>(as_integer(require(j, "n_c", context), context + ".n_c"));
  b.n_s = static_cast<int>(as_integer(require(j, "n_s", context), context + ".n_s"));
  b.n_theta =
      static_cast<int>(as_integer(require(j, "n_theta", context), context + ".n_theta"));
  b.c_max = get_double_or(j, "c_max", 0.0, context);
  return b;
}

json params_to_json(const model::ModelParams& p) {
  return {{"mu1", p.mu1},     {"mu2", p.mu2}, {"sigma1", p.sigma1},
          {"sigma2", p.sigma2}, {"rho", p.rho}, {"beta", p.beta}};
}

json binning_to_json(const unfold::BinningSpec& b) {
  return {{"n_c", b.n_c}, {"n_s", b.n_s}, {"n_theta", b.n_theta}, {"c_max", b.c_max}};
}

void write_json(const std::string& path, const json& j) {
  io::atomic_write_text(path, j.dump(2) + "\n");
}

// Fills in a data-driven c_max when the config leaves it unset.
unfold::BinningSpec resolve_binning(unfold::BinningSpec b,
                                    const std::vector<sectioning::SectionEllipse>& ellipses) {
  if (b.c_max <= 0.0) {
    double max_c = 0.0;
    for (const auto& e : ellipses) max_c = std::max(max_c, e.C);
    if (max_c <= 0.0) throw DataError("cannot infer c_max from an empty dataset");
    b.c_max = 1.25 * max_c;
  }
  b.validate();
  return b;
}

unfold::KernelMatrix obtain_kernel(const unfold::BinningSpec& binning,
                                   long mc_reps, std::uint64_t seed, int threads,
                                   const std::string& cache_path) {
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    unfold::KernelMatrix k = unfold::load_kernel(cache_path);
    if (k.binning == binning && k.mc_reps == mc_reps && k.seed == seed) return k;
  }
  unfold::KernelMatrix k = unfold::estimate_kernel(binning, mc_reps, seed, threads);
  if (!cache_path.empty()) unfold::save_kernel(cache_path, k);
  return k;
}

qle::SimConfig qle_sim_config(const json& cfg, const std::string& context,
                              std::size_t n_observed) {
  const double side = get_double(cfg, "window_side", context);
  const bool has_lambda = cfg.contains("lambda_v");
  const bool match = cfg.contains("match_sample_size")
                         ? as_bool(cfg["match_sample_size"], context)
                         : !has_lambda;
  qle::SimConfig sim =
      qle::square_window_config(side, has_lambda ? get_double(cfg, "lambda_v", context) : 1.0);
  if (match) {
    sim.match_sample_size = true;
    sim.target_n = static_cast<double>(n_observed);
  } else if (!has_lambda) {
    throw ConfigError(context + ": need lambda_v or match_sample_size");
  }
  return sim;
}

int cmd_simulate(const json& cfg, const Overrides& ov) {
  const std::string ctx = "simulate config";
  check_keys(cfg, {"params", "lambda_v", "window", "seed", "output",
                   "metadata_output"}, ctx);
  simulate::ProcessConfig pc;
  pc.params = parse_params(require(cfg, "params", ctx), ctx + ".params");
  pc.lambda_v = get_double(cfg, "lambda_v", ctx);
  pc.window = parse_window(require(cfg, "window", ctx), ctx + ".window");
  pc.seed = ov.seed.value_or(get_seed_or(cfg, "seed", 0, ctx));
  try {
    pc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  }

  long pre_discard = 0;
  const std::vector<simulate::Spheroid> spheroids =
      simulate::simulate_process(pc, &pre_discard);
  const std::string output = get_string(cfg, "output", ctx);
  io::write_spheroids_csv(output, spheroids);

  const std::string meta_path = get_string_or(cfg, "metadata_output", "", ctx);
  if (!meta_path.empty()) {
    write_json(meta_path, {{"seed", pc.seed},
                           {"pre_discard", pre_discard},
                           {"kept", spheroids.size()},
                           {"expected_hit_count", simulate::expected_hit_count(pc)}});
  }
  std::cout << "wrote " << spheroids.size() << " spheroids to " << output << "\n";
  return 0;
}

int cmd_section(const json& cfg, const Overrides&) {
  const std::string ctx = "section config";
  check_keys(cfg, {"input", "observed", "edge_rule", "margin", "output"}, ctx);
  const std::vector<simulate::Spheroid> spheroids =
      io::read_spheroids_csv(get_string(cfg, "input", ctx));
  const sectioning::Rect2 observed =
      parse_rect(require(cfg, "observed", ctx), ctx + ".observed");
  const std::string rule = get_string_or(cfg, "edge_rule", "centers_in", ctx);
  sectioning::EdgeRule edge_rule;
  if (rule == "centers_in")
    edge_rule = sectioning::EdgeRule::kCentersIn;
  else if (rule == "minus_sampling")
    edge_rule = sectioning::EdgeRule::kMinusSampling;
  else
    throw ConfigError(ctx + ".edge_rule: expected 'centers_in' or 'minus_sampling'");
  const double margin = get_double_or(cfg, "margin", 0.0, ctx);

  const std::vector<sectioning::SectionEllipse> ellipses = sectioning::section_process(
      spheroids, sectioning::vertical_plane(), observed, edge_rule, margin);
  const std::string output = get_string(cfg, "output", ctx);
  io::write_ellipses_csv(output, ellipses);
  std::cout << "wrote " << ellipses.size() << " section profiles to " << output
            << "\n";
  return 0;
}

int cmd_unfold(const json& cfg, const Overrides& ov) {
  const std::string ctx = "unfold config";
  check_keys(cfg, {"input", "binning", "kernel_mc_reps", "seed", "threads",
                   "kernel_cache", "output", "report_output"}, ctx);
  const std::vector<sectioning::SectionEllipse> ellipses =
      io::read_ellipses_csv(get_string(cfg, "input", ctx));
  const unfold::BinningSpec binning = resolve_binning(
      parse_binning(require(cfg, "binning", ctx), ctx + ".binning"), ellipses);
  const long mc_reps = get_integer_or(cfg, "kernel_mc_reps", 10000, ctx);
  const std::uint64_t seed = ov.seed.value_or(get_seed_or(cfg, "seed", 0, ctx));
  const int threads =
      ov.threads.value_or(static_cast<int>(get_integer_or(cfg, "threads", 1, ctx)));

  const unfold::KernelMatrix kernel = obtain_kernel(
      binning, mc_reps, seed, threads, get_string_or(cfg, "kernel_cache", "", ctx));
  const unfold::Histogram3D g = unfold::bin_ellipses(ellipses, binning);
  const unfold::EmResult em = unfold::em_unfold(g, kernel);

  const std::string output = get_string(cfg, "output", ctx);
  io::write_histogram_csv(output, em.h);
  const std::string report = get_string_or(cfg, "report_output", "", ctx);
  if (!report.empty()) {
    write_json(report, {{"iterations", em.iterations},
                        {"loglik", em.loglik},
                        {"sections", ellipses.size()},
                        {"binning", binning_to_json(binning)}});
  }
  std::cout << "unfolded " << ellipses.size() << " profiles in "
            << em.iterations << " iterations; wrote " << output << "\n";
  return 0;
}

int cmd_fit_umle(const json& cfg, const Overrides& ov) {
  const std::string ctx = "fit-umle config";
  check_keys(cfg, {"input", "binning", "kernel_mc_reps", "seed", "threads",
                   "kernel_cache", "output"}, ctx);
  const std::vector<sectioning::SectionEllipse> ellipses =
      io::read_ellipses_csv(get_string(cfg, "input", ctx));
  const unfold::BinningSpec binning = resolve_binning(
      parse_binning(require(cfg, "binning", ctx), ctx + ".binning"), ellipses);
  const long mc_reps = get_integer_or(cfg, "kernel_mc_reps", 10000, ctx);
  const std::uint64_t seed = ov.seed.value_or(get_seed_or(cfg, "seed", 0, ctx));
  const int threads =
      ov.threads.value_or(static_cast<int>(get_integer_or(cfg, "threads", 1, ctx)));

  const unfold::KernelMatrix kernel = obtain_kernel(
      binning, mc_reps, seed, threads, get_string_or(cfg, "kernel_cache", "", ctx));
  const unfold::Histogram3D g = unfold::bin_ellipses(ellipses, binning);
  const unfold::EmResult em = unfold::em_unfold(g, kernel);
  const mle::MleFit fit = mle::fit_binned(em.h);

  write_json(get_string(cfg, "output", ctx),
             {{"params", params_to_json(fit.params)},
              {"loglik_beta", fit.loglik_beta},
              {"loglik_size_shape", fit.loglik_size_shape},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"beta_at_boundary", fit.beta_at_boundary},
              {"em", {{"iterations", em.iterations}, {"loglik", em.loglik}}},
              {"binning", binning_to_json(binning)},
              {"sections", ellipses.size()}});
  std::cout << "fit-umle: mu1=" << fit.params.mu1 << " beta=" << fit.params.beta
            << " (" << ellipses.size() << " profiles)\n";
  return 0;
}

int cmd_fit_qle(const json& cfg, const Overrides& ov) {
  const std::string ctx = "fit-qle config";
  check_keys(cfg, {"input", "window_side", "lambda_v", "match_sample_size",
                   "n_sim", "max_iter", "deviance_tol", "max_halvings",
                   "max_step_norm", "seed", "threads", "start", "output"}, ctx);
  const std::vector<sectioning::SectionEllipse> ellipses =
      io::read_ellipses_csv(get_string(cfg, "input", ctx));
  const qle::StatsVector y = qle::compute_statistics(ellipses);
  const qle::SimConfig sim = qle_sim_config(cfg, ctx, ellipses.size());

  qle::QleConfig qcfg;
  qcfg.n_sim = static_cast<int>(get_integer_or(cfg, "n_sim", qcfg.n_sim, ctx));
  qcfg.max_iter = static_cast<int>(get_integer_or(cfg, "max_iter", qcfg.max_iter, ctx));
  qcfg.deviance_tol = get_double_or(cfg, "deviance_tol", qcfg.deviance_tol, ctx);
  qcfg.max_halvings =
      static_cast<int>(get_integer_or(cfg, "max_halvings", qcfg.max_halvings, ctx));
  qcfg.max_step_norm =
      get_double_or(cfg, "max_step_norm", qcfg.max_step_norm, ctx);
  qcfg.seed = ov.seed.value_or(get_seed_or(cfg, "seed", 0, ctx));
  qcfg.threads =
      ov.threads.value_or(static_cast<int>(get_integer_or(cfg, "threads", 1, ctx)));

  const model::ModelParams theta0 =
      cfg.contains("start") ? parse_params(cfg["start"], ctx + ".start")
                            : qle::default_start(y);
  const qle::QleFit fit = qle::quasi_scoring_fit(y, theta0, sim, qcfg);

  json trace = json::array();
  for (const qle::IterationRecord& rec : fit.trace) {
    const model::ModelParams p = qle::from_unconstrained(rec.z);
    trace.push_back({{"params", params_to_json(p)},
                     {"step", rec.step},
                     {"score_norm", rec.score_norm},
                     {"deviance", rec.deviance}});
  }
  json se = json::array();
  for (int d = 0; d < qle::kNumParams; ++d) se.push_back(fit.asymptotic_se[d]);
  write_json(get_string(cfg, "output", ctx),
             {{"params", params_to_json(fit.theta_hat)},
              {"asymptotic_se", se},
              {"converged", fit.converged},
              {"stalled", fit.stalled},
              {"iterations", fit.iterations},
              {"trace", trace},
              {"config", {{"n_sim", qcfg.n_sim},
                          {"max_iter", qcfg.max_iter},
                          {"deviance_tol", qcfg.deviance_tol},
                          {"max_halvings", qcfg.max_halvings},
                          {"seed", qcfg.seed}}},
              {"sections", ellipses.size()}});
  std::cout << "fit-qle: " << (fit.converged ? "converged" : "not converged")
            << " after " << fit.iterations << " steps; mu1=" << fit.theta_hat.mu1
            << " beta=" << fit.theta_hat.beta << "\n";
  return 0;
}

int cmd_study(const json& cfg, const Overrides& ov) {
  const std::string ctx = "study config";
  check_keys(cfg, {"true_params", "lambda_v", "window_side", "n_reps",
                   "binnings", "methods", "qle_n_sim", "kernel_mc_reps",
                   "bootstrap_b", "seed", "threads", "kernel_cache_dir",
                   "output", "estimates_output", "metadata_output"}, ctx);
  study::StudyConfig scfg;
  scfg.true_params = parse_params(require(cfg, "true_params", ctx), ctx + ".true_params");
  scfg.lambda_v = get_double_or(cfg, "lambda_v", scfg.lambda_v, ctx);
  scfg.window_side = get_double_or(cfg, "window_side", scfg.window_side, ctx);
  scfg.n_reps = static_cast<int>(get_integer_or(cfg, "n_reps", scfg.n_reps, ctx));
  if (cfg.contains("binnings")) {
    const json& arr = cfg["binnings"];
    if (!arr.is_array() || arr.empty())
      throw ConfigError(ctx + ".binnings: expected a nonempty array");
    scfg.binnings.clear();
    for (const json& item : arr) {
      if (!item.is_array() || item.size() != 3)
        throw ConfigError(ctx + ".binnings: each entry is [n_c, n_s, n_theta]");
      scfg.binnings.push_back({static_cast<int>(as_integer(item[0], ctx)),
                               static_cast<int>(as_integer(item[1], ctx)),
                               static_cast<int>(as_integer(item[2], ctx))});
    }
  }
  if (cfg.contains("methods")) {
    const json& arr = cfg["methods"];
    if (!arr.is_array()) throw ConfigError(ctx + ".methods: expected an array");
    scfg.run_umle = scfg.run_qle = scfg.run_binmle = scfg.run_mle3d = false;
    for (const json& item : arr) {
      const std::string m = as_string(item, ctx + ".methods");
      if (m == "umle")
        scfg.run_umle = true;
      else if (m == "qle")
        scfg.run_qle = true;
      else if (m == "binmle")
        scfg.run_binmle = true;
      else if (m == "mle3d")
        scfg.run_mle3d = true;
      else
        throw ConfigError(ctx + ".methods: unknown method '" + m + "'");
    }
  }
  scfg.qle_n_sim = static_cast<int>(get_integer_or(cfg, "qle_n_sim", scfg.qle_n_sim, ctx));
  scfg.kernel_mc_reps = get_integer_or(cfg, "kernel_mc_reps", scfg.kernel_mc_reps, ctx);
  scfg.bootstrap_b =
      static_cast<int>(get_integer_or(cfg, "bootstrap_b", scfg.bootstrap_b, ctx));
  scfg.master_seed = ov.seed.value_or(get_seed_or(cfg, "seed", 0, ctx));
  scfg.threads =
      ov.threads.value_or(static_cast<int>(get_integer_or(cfg, "threads", 1, ctx)));
  scfg.kernel_cache_dir = get_string_or(cfg, "kernel_cache_dir", "", ctx);
  try {
    scfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  }

  const study::StudyResult result = study::run_study(scfg);

  const char* names[6] = {"mu1", "mu2", "sigma1", "sigma2", "rho", "beta"};
  std::string table = "method";
  for (const char* n : names) table += std::string(",rmse_") + n;
  for (const char* n : names) table += std::string(",se_") + n;
  table += ",failures\n";
  char buf[32];
  for (const study::MethodResult& m : result.methods) {
    table += m.name;
    for (int d = 0; d < 6; ++d) {
      std::snprintf(buf, sizeof(buf), ",%.6g", m.rmse[d]);
      table += buf;
    }
    for (int d = 0; d < 6; ++d) {
      std::snprintf(buf, sizeof(buf), ",%.6g", m.bootstrap_se[d]);
      table += buf;
    }
    table += ',' + std::to_string(m.failures) + '\n';
  }
  const std::string output = get_string(cfg, "output", ctx);
  io::atomic_write_text(output, table);

  const std::string est_path = get_string_or(cfg, "estimates_output", "", ctx);
  if (!est_path.empty()) {
    std::string est = "method,rep";
    for (const char* n : names) est += std::string(",") + n;
    est += '\n';
    for (const study::MethodResult& m : result.methods) {
      for (Eigen::Index r = 0; r < m.estimates.rows(); ++r) {
        est += m.name + ',' + std::to_string(r);
        for (int d = 0; d < 6; ++d) {
          std::snprintf(buf, sizeof(buf), ",%.10g", m.estimates(r, d));
          est += buf;
        }
        est += '\n';
      }
    }
    io::atomic_write_text(est_path, est);
  }

  const std::string meta_path = get_string_or(cfg, "metadata_output", "", ctx);
  if (!meta_path.empty()) {
    json counts = json::array();
    for (Eigen::Index r = 0; r < result.section_counts.size(); ++r)
      counts.push_back(result.section_counts[r]);
    write_json(meta_path, {{"true_params", params_to_json(result.true_params)},
                           {"section_counts", counts},
                           {"c_max_2d", result.c_max_2d},
                           {"c_max_3d", result.c_max_3d},
                           {"seed", scfg.master_seed}});
  }
  std::cout << "study finished: " << result.methods.size() << " methods, "
            << scfg.n_reps << " replicates; wrote " << output << "\n";
  return 0;
}

int cmd_gof(const json& cfg, const Overrides& ov) {
  const std::string ctx = "gof config";
  check_keys(cfg, {"input", "params", "window_side", "lambda_v",
                   "match_sample_size", "m", "grid_points", "seed", "output",
                   "envelope_output"}, ctx);
  const std::vector<sectioning::SectionEllipse> ellipses =
      io::read_ellipses_csv(get_string(cfg, "input", ctx));
  if (ellipses.empty()) throw DataError("gof: empty dataset");
  const model::ModelParams params =
      parse_params(require(cfg, "params", ctx), ctx + ".params");
  const qle::SimConfig sim = qle_sim_config(cfg, ctx, ellipses.size());
  const int m = static_cast<int>(get_integer_or(cfg, "m", 199, ctx));
  const int grid_points = static_cast<int>(get_integer_or(cfg, "grid_points", 64, ctx));
  if (grid_points < 2) throw ConfigError(ctx + ".grid_points: need >= 2");
  const std::uint64_t seed = ov.seed.value_or(get_seed_or(cfg, "seed", 0, ctx));

  const auto extract = [](const std::vector<sectioning::SectionEllipse>& es,
                          int what) {
    std::vector<double> v;
    v.reserve(es.size());
    for (const auto& e : es) {
      switch (what) {
        case 0: v.push_back(e.C); break;
        case 1: v.push_back(e.A); break;
        case 2: v.push_back(e.S); break;
        default: v.push_back(e.alpha); break;
      }
    }
    return v;
  };

  const char* stat_names[4] = {"C", "A", "S", "alpha"};
  json p_values;
  std::string envelope_csv = "statistic,grid,lower,upper,empirical\n";
  const RngStream root(seed);
  for (int what = 0; what < 4; ++what) {
    const std::vector<double> data = extract(ellipses, what);
    const study::ModelSampler sampler = [&](RngStream& rng) {
      return extract(qle::simulate_dataset(params, sim, rng.base_seed()), what);
    };
    RngStream ks_rng = root.child(2 * what);
    p_values[stat_names[what]] = study::ks_test_mc(data, sampler, m, ks_rng);

    const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
    const double pad = 0.05 * std::max(1e-12, *hi_it - *lo_it);
    std::vector<double> grid(grid_points);
    for (int g = 0; g < grid_points; ++g)
      grid[g] = (*lo_it - pad) +
                (*hi_it - *lo_it + 2 * pad) * g / (grid_points - 1.0);
    RngStream env_rng = root.child(2 * what + 1);
    const study::EnvelopeResult env =
        study::envelope_cdf(data, sampler, std::max(m, 39), grid, env_rng);
    char buf[128];
    for (int g = 0; g < grid_points; ++g) {
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g\n",
                    stat_names[what], env.grid[g], env.lower[g], env.upper[g],
                    env.empirical[g]);
      envelope_csv += buf;
    }
  }

  write_json(get_string(cfg, "output", ctx),
             {{"p_values", p_values},
              {"m", m},
              {"seed", seed},
              {"params", params_to_json(params)},
              {"sections", ellipses.size()}});
  const std::string env_path = get_string_or(cfg, "envelope_output", "", ctx);
  if (!env_path.empty()) io::atomic_write_text(env_path, envelope_csv);
  std::cout << "gof: p(C)=" << p_values["C"] << " p(A)=" << p_values["A"]
            << " p(S)=" << p_values["S"] << " p(alpha)=" << p_values["alpha"]
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spheroid size-shape-orientation estimation from planar sections"};
  app.require_subcommand(1);

  struct SubSpec {
    const char* name;
    const char* help;
    int (*run)(const json&, const Overrides&);
  };
  const SubSpec specs[] = {
      {"simulate", "draw the spheroids of a stationary process hitting a window",
       cmd_simulate},
      {"section", "intersect spheroids with the vertical plane", cmd_section},
      {"unfold", "EM unfolding of binned section profiles", cmd_unfold},
      {"fit-umle", "unfold, then binned maximum likelihood", cmd_fit_umle},
      {"fit-qle", "simulation-based quasi-likelihood fit", cmd_fit_qle},
      {"study", "replicated comparison of all estimators", cmd_study},
      {"gof", "Monte Carlo goodness-of-fit tests and envelopes", cmd_gof},
  };

  struct SubState {
    CLI::App* sub = nullptr;
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    int threads = 1;
    CLI::Option* threads_opt = nullptr;
    int (*run)(const json&, const Overrides&) = nullptr;
  };
  std::vector<SubState> states(std::size(specs));
  for (std::size_t i = 0; i < std::size(specs); ++i) {
    SubState& st = states[i];
    st.sub = app.add_subcommand(specs[i].name, specs[i].help);
    st.sub->add_option("--config", st.config_path, "JSON configuration file")
        ->required();
    st.seed_opt = st.sub->add_option("--seed", st.seed, "override the config seed");
    st.threads_opt =
        st.sub->add_option("--threads", st.threads, "override the thread count");
    st.run = specs[i].run;
  }

  try {
    app.parse(argc, argv);
    for (const SubState& st : states) {
      if (!st.sub->parsed()) continue;
      Overrides ov;
      if (st.seed_opt->count() > 0) ov.seed = st.seed;
      if (st.threads_opt->count() > 0) ov.threads = st.threads;
      return st.run(load_config(st.config_path), ov);
    }
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
