#include <sys/wait.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "spherest/errors.hpp"
#include "spherest/io.hpp"
#include "spherest/sectioning.hpp"
#include "spherest/simulate.hpp"
#include "spherest/unfold.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spherest;

simulate::Spheroid make_spheroid(double cx, double cy, double cz, double a,
                                 double c) {
  simulate::Spheroid sp;
  sp.center = {cx, cy, cz};
  sp.axis = Eigen::Vector3d(1.0, 2.0, 2.0).normalized();
  sp.a = a;
  sp.c = c;
  return sp;
}

sectioning::SectionEllipse make_ellipse(double c, double s, double alpha) {
  sectioning::SectionEllipse e;
  e.center2 = {0.25, -0.5};
  e.A = c / s;
  e.C = c;
  e.S = s;
  e.alpha = alpha;
  return e;
}

json setting1_json() {
  return {{"mu1", -2.15}, {"mu2", 0.55},  {"sigma1", 0.35},
          {"sigma2", 0.3}, {"rho", 0.0}, {"beta", 1.0}};
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_config(const fs::path& path, const json& j) {
  io::atomic_write_text(path.string(), j.dump(2) + "\n");
}

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run_cli(const fs::path& dir, const std::string& args) {
  const fs::path out_path = dir / "stdout.txt";
  const fs::path err_path = dir / "stderr.txt";
  const std::string cmd = std::string(SPHEREST_CLI_PATH) + " " + args + " >" +
                          out_path.string() + " 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_text(out_path.string());
  r.err = io::read_text(err_path.string());
  return r;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("io: spheroid csv round trip") {
  std::vector<simulate::Spheroid> sps;
  sps.push_back(make_spheroid(0.001, -12345.6789, 3.0, 2.5, 0.125));
  sps.push_back(make_spheroid(1.0 / 3.0, 0.0, -8.25, 1e-3, 1e-3));
  const std::string text = io::format_spheroids_csv(sps);

  const std::vector<simulate::Spheroid> back = io::parse_spheroids_csv(text);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].center == sps[i].center);
    CHECK(back[i].axis == sps[i].axis);
    CHECK(back[i].a == sps[i].a);
    CHECK(back[i].c == sps[i].c);
  }
  CHECK(io::format_spheroids_csv(back) == text);

  CHECK(io::format_spheroids_csv({}) == "cx,cy,cz,ax,ay,az,a,c\n");
  CHECK(io::parse_spheroids_csv("cx,cy,cz,ax,ay,az,a,c\n").empty());

  const std::string padded =
      "\n  cx,cy,cz,ax,ay,az,a,c  \n\n 1 , 2 ,3, 1, 0 ,0 , 2.0 , 1.0 \n\n";
  const std::vector<simulate::Spheroid> loose = io::parse_spheroids_csv(padded);
  REQUIRE(loose.size() == 1);
  CHECK(loose[0].center == Eigen::Vector3d(1, 2, 3));
  CHECK(loose[0].a == 2.0);
}

TEST_CASE("io: spheroid csv parse errors") {
  const std::string header = "cx,cy,cz,ax,ay,az,a,c\n";
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv("cx,cy\n1,2\n"),
                       doctest::Contains("line 1: expected header "
                                         "'cx,cy,cz,ax,ay,az,a,c'"),
                       DataError);
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv(""),
                       doctest::Contains("empty file: missing header"),
                       DataError);
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv("\n   \n"),
                       doctest::Contains("empty file: missing header"),
                       DataError);
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv(header + "1,2,3\n"),
                       doctest::Contains("line 2: expected 8 fields, got 3"),
                       DataError);
  CHECK_THROWS_WITH_AS(
      io::parse_spheroids_csv(header + "0,0,0,1,0,0,abc,0.5\n"),
      doctest::Contains("line 2: invalid number 'abc' in column 7"), DataError);
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv(header + "0,0,0,1,1,0,2,1\n"),
                       doctest::Contains("line 2: axis is not a unit vector"),
                       DataError);
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv(header + "0,0,0,1,0,0,0.5,1\n"),
                       doctest::Contains("line 2: need a >= c > 0"), DataError);
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv(header + "0,0,0,1,0,0,2,0\n"),
                       doctest::Contains("need a >= c > 0"), DataError);

  // Blank lines still advance the reported line number.
  const std::string gap =
      header + "\n0,0,0,1,0,0,2,1\n0,0,0,1,0,0,0.5,1\n";
  CHECK_THROWS_WITH_AS(io::parse_spheroids_csv(gap),
                       doctest::Contains("line 4:"), DataError);

  // A nearly-unit axis is renormalized rather than rejected.
  const std::vector<simulate::Spheroid> ok =
      io::parse_spheroids_csv(header + "0,0,0,1.0000001,0,0,2,1\n");
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].axis.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("io: ellipse csv round trip") {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  std::vector<sectioning::SectionEllipse> es;
  es.push_back(make_ellipse(0.1, 0.25, 0.0));
  es.push_back(make_ellipse(1.75, 1.0, kHalfPi));
  es.push_back(make_ellipse(0.03125, 0.7, 1.0 / 3.0));
  const std::string text = io::format_ellipses_csv(es);

  const std::vector<sectioning::SectionEllipse> back =
      io::parse_ellipses_csv(text);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].center2 == es[i].center2);
    CHECK(back[i].A == es[i].A);
    CHECK(back[i].C == es[i].C);
    CHECK(back[i].S == es[i].S);
    CHECK(back[i].alpha == es[i].alpha);
  }
  CHECK(io::format_ellipses_csv(back) == text);
  CHECK(io::format_ellipses_csv({}) == "id,x,y,A,C,S,alpha\n");
}

TEST_CASE("io: ellipse csv parse errors and clamping") {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  const std::string header = "id,x,y,A,C,S,alpha\n";
  CHECK_THROWS_WITH_AS(io::parse_ellipses_csv("id,x,y\n"),
                       doctest::Contains("expected header 'id,x,y,A,C,S,alpha'"),
                       DataError);
  CHECK_THROWS_WITH_AS(
      io::parse_ellipses_csv(header + "x,0,0,2,1,0.5,0.3\n"),
      doctest::Contains("line 2: invalid number 'x' in column 1"), DataError);
  CHECK_THROWS_WITH_AS(io::parse_ellipses_csv(header + "1,0,0,1,2,0.5,0.3\n"),
                       doctest::Contains("line 2: need A >= C > 0"), DataError);
  CHECK_THROWS_WITH_AS(io::parse_ellipses_csv(header + "1,0,0,2,1,0.6,0.3\n"),
                       doctest::Contains("line 2: S inconsistent with C/A"),
                       DataError);
  CHECK_THROWS_WITH_AS(io::parse_ellipses_csv(header + "1,0,0,1,1,1.0000005,0.3\n"),
                       doctest::Contains("S inconsistent with C/A"), DataError);
  CHECK_THROWS_WITH_AS(io::parse_ellipses_csv(header + "1,0,0,2,1,0.5,1.6708\n"),
                       doctest::Contains("alpha outside [0, pi/2]"), DataError);
  CHECK_THROWS_WITH_AS(io::parse_ellipses_csv(header + "1,0,0,2,1,0.5,-0.001\n"),
                       doctest::Contains("alpha outside [0, pi/2]"), DataError);

  // S within 1e-6 of C/A is kept as written; alpha within 1e-9 of the domain
  // boundary is clamped onto it.
  const std::vector<sectioning::SectionEllipse> ok = io::parse_ellipses_csv(
      header + "1,0,0,2,1,0.5000005,1.5707963268948966\n2,0,0,2,1,0.5,-1e-10\n");
  REQUIRE(ok.size() == 2);
  CHECK(ok[0].S == 0.5000005);
  CHECK(ok[0].alpha == kHalfPi);
  CHECK(ok[1].alpha == 0.0);
}

TEST_CASE("io: histogram csv layout") {
  unfold::BinningSpec spec{2, 1, 2, 1.0};
  unfold::Histogram3D h(spec);
  h.values[spec.flat_index(0, 0, 0)] = 3.0;
  h.values[spec.flat_index(0, 0, 1)] = 4.5;
  h.values[spec.flat_index(1, 0, 0)] = 0.0;
  h.values[spec.flat_index(1, 0, 1)] = 1.0 / 3.0;
  CHECK(io::format_histogram_csv(h) ==
        "i,j,k,value\n"
        "0,0,0,3\n"
        "0,0,1,4.5\n"
        "1,0,0,0\n"
        "1,0,1,0.33333333333333331\n");
}

TEST_CASE("io: text files, atomicity and path-tagged errors") {
  const fs::path dir = fresh_dir("spherest_test_io_text");
  const fs::path file = dir / "payload.txt";
  const std::string content = "line1\r\nline2\nno trailing newline";
  io::atomic_write_text(file.string(), content);
  CHECK(io::read_text(file.string()) == content);
  CHECK(!fs::exists(file.string() + ".tmp"));

  io::atomic_write_text(file.string(), "replaced");
  CHECK(io::read_text(file.string()) == "replaced");

  const std::string missing = (dir / "absent.csv").string();
  CHECK_THROWS_WITH_AS(io::read_text(missing),
                       doctest::Contains("cannot read"), DataError);
  CHECK_THROWS_WITH_AS(
      io::atomic_write_text((dir / "no_dir" / "x.txt").string(), "a"),
      doctest::Contains("cannot write"), DataError);

  // File readers prefix every parse error with the offending path.
  CHECK_THROWS_WITH_AS(io::read_spheroids_csv(missing),
                       doctest::Contains((missing + ": cannot read").c_str()),
                       DataError);
  io::atomic_write_text(file.string(), "id,x,y,A,C,S,alpha\n1,0,0,1,2,0.5,0\n");
  CHECK_THROWS_WITH_AS(
      io::read_ellipses_csv(file.string()),
      doctest::Contains((file.string() + ": line 2: need A >= C > 0").c_str()),
      DataError);

  const std::vector<sectioning::SectionEllipse> es = {make_ellipse(0.5, 0.5, 0.7)};
  io::write_ellipses_csv(file.string(), es);
  const std::vector<sectioning::SectionEllipse> back =
      io::read_ellipses_csv(file.string());
  REQUIRE(back.size() == 1);
  CHECK(back[0].C == 0.5);

  fs::remove_all(dir);
}

TEST_CASE("cli: help, bad flags and broken configs") {
  const fs::path dir = fresh_dir("spherest_test_cli_flags");

  CHECK(run_cli(dir, "").code == 2);
  CHECK(run_cli(dir, "bogus-subcommand").code == 2);
  CHECK(run_cli(dir, "simulate").code == 2);

  const CliRun help = run_cli(dir, "--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(help.out.find("fit-qle") != std::string::npos);

  // A missing config file is an I/O failure, not a config failure.
  const CliRun gone =
      run_cli(dir, "simulate --config " + (dir / "absent.json").string());
  CHECK(gone.code == 3);
  CHECK(gone.err.find("cannot read") != std::string::npos);

  const fs::path broken = dir / "broken.json";
  io::atomic_write_text(broken.string(), "{oops");
  const CliRun bad = run_cli(dir, "simulate --config " + broken.string());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("config error") != std::string::npos);

  json cfg = {{"params", setting1_json()},
              {"lambda_v", 30.0},
              {"window", {{"origin", {0.0, -2.5, -2.5}}, {"edges", {0.0, 5.0, 5.0}}}},
              {"seed", 11},
              {"output", (dir / "out.csv").string()}};
  json with_unknown = cfg;
  with_unknown["bogus"] = 1;
  write_config(dir / "unknown.json", with_unknown);
  const CliRun unk =
      run_cli(dir, "simulate --config " + (dir / "unknown.json").string());
  CHECK(unk.code == 2);
  CHECK(unk.err.find("unknown key 'bogus'") != std::string::npos);

  json bad_rho = cfg;
  bad_rho["params"]["rho"] = 1.5;
  write_config(dir / "bad_rho.json", bad_rho);
  const CliRun rho =
      run_cli(dir, "simulate --config " + (dir / "bad_rho.json").string());
  CHECK(rho.code == 2);
  CHECK(rho.err.find("config error") != std::string::npos);
  CHECK(rho.err.find("rho must be in [-1, 1]") != std::string::npos);

  json no_window = cfg;
  no_window.erase("window");
  write_config(dir / "no_window.json", no_window);
  const CliRun miss =
      run_cli(dir, "simulate --config " + (dir / "no_window.json").string());
  CHECK(miss.code == 2);
  CHECK(miss.err.find("missing key 'window' in simulate config") !=
        std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("cli: simulate is seed-deterministic") {
  const fs::path dir = fresh_dir("spherest_test_cli_sim");
  const json window = {{"origin", {0.0, -2.5, -2.5}}, {"edges", {0.0, 5.0, 5.0}}};

  const auto sim_config = [&](const char* out, bool meta) {
    json cfg = {{"params", setting1_json()},
                {"lambda_v", 30.0},
                {"window", window},
                {"seed", 11},
                {"output", (dir / out).string()}};
    if (meta) cfg["metadata_output"] = (dir / "meta.json").string();
    return cfg;
  };
  write_config(dir / "c1.json", sim_config("out1.csv", true));
  write_config(dir / "c2.json", sim_config("out2.csv", false));
  write_config(dir / "c3.json", sim_config("out3.csv", false));

  const CliRun r1 = run_cli(dir, "simulate --config " + (dir / "c1.json").string());
  REQUIRE(r1.code == 0);
  CHECK(r1.out.find("wrote") != std::string::npos);
  const std::vector<simulate::Spheroid> sps =
      io::read_spheroids_csv((dir / "out1.csv").string());
  CHECK(sps.size() > 10);

  const json meta = json::parse(io::read_text((dir / "meta.json").string()));
  CHECK(meta["kept"].get<std::size_t>() == sps.size());
  CHECK(meta["seed"].get<std::uint64_t>() == 11);
  CHECK(meta["pre_discard"].get<long>() >= 0);
  CHECK(meta["expected_hit_count"].get<double>() > 0.0);

  REQUIRE(run_cli(dir, "simulate --config " + (dir / "c2.json").string()).code == 0);
  CHECK(io::read_text((dir / "out1.csv").string()) ==
        io::read_text((dir / "out2.csv").string()));

  // --seed beats the config seed.
  REQUIRE(run_cli(dir, "simulate --config " + (dir / "c3.json").string() +
                           " --seed 12")
              .code == 0);
  CHECK(io::read_text((dir / "out1.csv").string()) !=
        io::read_text((dir / "out3.csv").string()));

  fs::remove_all(dir);
}

TEST_CASE("cli: full pipeline from simulation to fits and gof") {
  const fs::path dir = fresh_dir("spherest_test_cli_pipeline");
  const std::string spheroids = (dir / "spheroids.csv").string();
  const std::string ellipses = (dir / "ellipses.csv").string();

  write_config(dir / "sim.json",
               {{"params", setting1_json()},
                {"lambda_v", 30.0},
                {"window", {{"origin", {0.0, -2.5, -2.5}}, {"edges", {0.0, 5.0, 5.0}}}},
                {"seed", 21},
                {"output", spheroids}});
  REQUIRE(run_cli(dir, "simulate --config " + (dir / "sim.json").string()).code == 0);

  write_config(dir / "sec.json",
               {{"input", spheroids},
                {"observed",
                 {{"x_lo", -2.5}, {"x_hi", 2.5}, {"y_lo", -2.5}, {"y_hi", 2.5}}},
                {"edge_rule", "centers_in"},
                {"output", ellipses}});
  const CliRun sec = run_cli(dir, "section --config " + (dir / "sec.json").string());
  REQUIRE(sec.code == 0);
  const std::size_t n = io::read_ellipses_csv(ellipses).size();
  REQUIRE(n >= 30);

  const json binning = {{"n_c", 6}, {"n_s", 5}, {"n_theta", 6}};
  const std::string cache = (dir / "kernel.bin").string();
  write_config(dir / "unfold.json", {{"input", ellipses},
                                     {"binning", binning},
                                     {"kernel_mc_reps", 3000},
                                     {"seed", 5},
                                     {"kernel_cache", cache},
                                     {"output", (dir / "h.csv").string()},
                                     {"report_output", (dir / "rep.json").string()}});
  const CliRun unf = run_cli(dir, "unfold --config " + (dir / "unfold.json").string());
  REQUIRE(unf.code == 0);
  CHECK(unf.out.find("unfolded") != std::string::npos);
  CHECK(fs::exists(cache));

  const std::string hist = io::read_text((dir / "h.csv").string());
  CHECK(hist.rfind("i,j,k,value\n", 0) == 0);
  CHECK(count_lines(hist) == 1 + 6 * 5 * 6);

  const json rep = json::parse(io::read_text((dir / "rep.json").string()));
  CHECK(rep["iterations"].get<int>() >= 1);
  CHECK(rep["sections"].get<std::size_t>() == n);
  CHECK(rep["binning"]["c_max"].get<double>() > 0.0);

  // Re-fitting with the same binning reuses the cached kernel.
  write_config(dir / "umle.json", {{"input", ellipses},
                                   {"binning", binning},
                                   {"kernel_mc_reps", 3000},
                                   {"seed", 5},
                                   {"kernel_cache", cache},
                                   {"output", (dir / "umle_fit.json").string()}});
  const CliRun umle =
      run_cli(dir, "fit-umle --config " + (dir / "umle.json").string());
  REQUIRE(umle.code == 0);
  const json ufit = json::parse(io::read_text((dir / "umle_fit.json").string()));
  for (const char* k : {"mu1", "mu2", "sigma1", "sigma2", "rho", "beta"})
    CHECK(std::isfinite(ufit["params"][k].get<double>()));
  CHECK(std::abs(ufit["params"]["mu1"].get<double>() + 2.15) < 1.5);
  CHECK(ufit["params"]["beta"].get<double>() > 0.0);
  CHECK(ufit["sections"].get<std::size_t>() == n);
  CHECK(ufit["em"]["iterations"].get<int>() >= 1);

  write_config(dir / "qle.json", {{"input", ellipses},
                                  {"window_side", 5.0},
                                  {"match_sample_size", true},
                                  {"n_sim", 20},
                                  {"max_iter", 2},
                                  {"max_halvings", 3},
                                  {"seed", 31},
                                  {"start", setting1_json()},
                                  {"output", (dir / "qle_fit.json").string()}});
  const CliRun qle = run_cli(dir, "fit-qle --config " + (dir / "qle.json").string());
  REQUIRE(qle.code == 0);
  const json qfit = json::parse(io::read_text((dir / "qle_fit.json").string()));
  for (const char* k : {"mu1", "mu2", "sigma1", "sigma2", "rho", "beta"})
    CHECK(std::isfinite(qfit["params"][k].get<double>()));
  REQUIRE(qfit["asymptotic_se"].size() == 6);
  for (const json& se : qfit["asymptotic_se"]) CHECK(se.get<double>() > 0.0);
  CHECK(qfit["trace"].size() >= 1);
  CHECK(qfit["iterations"].get<int>() <= 2);
  CHECK(qfit["sections"].get<std::size_t>() == n);
  CHECK(qfit["config"]["n_sim"].get<int>() == 20);

  write_config(dir / "gof.json", {{"input", ellipses},
                                  {"params", setting1_json()},
                                  {"window_side", 5.0},
                                  {"match_sample_size", true},
                                  {"m", 19},
                                  {"grid_points", 16},
                                  {"seed", 41},
                                  {"output", (dir / "gof.json.out").string()},
                                  {"envelope_output", (dir / "env.csv").string()}});
  const CliRun gof = run_cli(dir, "gof --config " + (dir / "gof.json").string());
  REQUIRE(gof.code == 0);
  CHECK(gof.out.find("p(C)=") != std::string::npos);
  const json gj = json::parse(io::read_text((dir / "gof.json.out").string()));
  for (const char* k : {"C", "A", "S", "alpha"}) {
    const double p = gj["p_values"][k].get<double>();
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(gj["m"].get<int>() == 19);
  CHECK(gj["sections"].get<std::size_t>() == n);
  const std::string env = io::read_text((dir / "env.csv").string());
  CHECK(env.rfind("statistic,grid,lower,upper,empirical\n", 0) == 0);
  CHECK(count_lines(env) == 1 + 4 * 16);

  fs::remove_all(dir);
}

TEST_CASE("cli: section guards and empty datasets") {
  const fs::path dir = fresh_dir("spherest_test_cli_section");
  const std::string empty_sps = (dir / "empty.csv").string();
  io::write_spheroids_csv(empty_sps, {});
  const json observed = {{"x_lo", -1.0}, {"x_hi", 1.0}, {"y_lo", -1.0}, {"y_hi", 1.0}};

  write_config(dir / "bad_rule.json", {{"input", empty_sps},
                                       {"observed", observed},
                                       {"edge_rule", "trim"},
                                       {"output", (dir / "e.csv").string()}});
  const CliRun bad =
      run_cli(dir, "section --config " + (dir / "bad_rule.json").string());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("expected 'centers_in' or 'minus_sampling'") !=
        std::string::npos);

  write_config(dir / "missing.json", {{"input", (dir / "absent.csv").string()},
                                      {"observed", observed},
                                      {"output", (dir / "e.csv").string()}});
  const CliRun gone =
      run_cli(dir, "section --config " + (dir / "missing.json").string());
  CHECK(gone.code == 3);
  CHECK(gone.err.find("data error") != std::string::npos);
  CHECK(gone.err.find("cannot read") != std::string::npos);

  write_config(dir / "empty_run.json", {{"input", empty_sps},
                                        {"observed", observed},
                                        {"output", (dir / "e.csv").string()}});
  const CliRun ok =
      run_cli(dir, "section --config " + (dir / "empty_run.json").string());
  CHECK(ok.code == 0);
  CHECK(io::read_ellipses_csv((dir / "e.csv").string()).empty());

  // Unfolding an empty dataset cannot infer a size range.
  write_config(dir / "unfold_empty.json",
               {{"input", (dir / "e.csv").string()},
                {"binning", {{"n_c", 4}, {"n_s", 4}, {"n_theta", 4}}},
                {"kernel_mc_reps", 100},
                {"output", (dir / "h.csv").string()}});
  const CliRun unf =
      run_cli(dir, "unfold --config " + (dir / "unfold_empty.json").string());
  CHECK(unf.code == 3);
  CHECK(unf.err.find("cannot infer c_max from an empty dataset") !=
        std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("cli: unfold surfaces an unexplainable observation as exit 4") {
  const fs::path dir = fresh_dir("spherest_test_cli_exit4");
  unfold::BinningSpec spec{2, 2, 2, 1.0};
  const int n = spec.classes();

  // Kernel whose row for class (1,1,0) is identically zero, planted via the
  // cache; a profile binned there is then impossible under the model.
  unfold::KernelMatrix kernel;
  kernel.binning = spec;
  kernel.entries = Eigen::MatrixXd::Identity(n, n);
  kernel.entries.row(spec.flat_index(1, 1, 0)).setZero();
  kernel.entry_se = Eigen::MatrixXf::Zero(n, n);
  kernel.mc_reps = 7;
  kernel.seed = 9;
  const std::string cache = (dir / "kernel.bin").string();
  unfold::save_kernel(cache, kernel);

  const std::string data = (dir / "one.csv").string();
  io::write_ellipses_csv(data, {make_ellipse(0.75, 0.75, 0.1)});

  write_config(dir / "unfold.json",
               {{"input", data},
                {"binning",
                 {{"n_c", 2}, {"n_s", 2}, {"n_theta", 2}, {"c_max", 1.0}}},
                {"kernel_mc_reps", 7},
                {"seed", 9},
                {"kernel_cache", cache},
                {"output", (dir / "h.csv").string()}});
  const CliRun r = run_cli(dir, "unfold --config " + (dir / "unfold.json").string());
  CHECK(r.code == 4);
  CHECK(r.err.find("numerical error") != std::string::npos);
  CHECK(r.err.find("cannot explain") != std::string::npos);

  fs::remove_all(dir);
}
