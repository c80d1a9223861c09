#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "deceval/data.hpp"
#include "deceval/errors.hpp"
#include "deceval/run.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace deceval;
using nlohmann::json;

namespace {

std::string tmp_path(const std::string& name) { return "/tmp/deceval_unit_" + name; }

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run(const RunConfig& cfg) {
  std::ostringstream out, err;
  RunResult r;
  r.code = run_main(cfg, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config entries parse and reject by key") {
  RunConfig cfg;
  apply_config_entry(cfg, "l01", "0.5, 1, 2");
  CHECK(cfg.l01 == std::vector<double>({0.5, 1.0, 2.0}));
  apply_config_entry(cfg, "l01", "3");
  CHECK(cfg.l01 == std::vector<double>({3.0}));  // replaces, not appends
  apply_config_entry(cfg, "alpha", "0.1");
  CHECK(cfg.alpha == 0.1);
  apply_config_entry(cfg, "seed", "42");
  CHECK(cfg.seed == 42);
  apply_config_entry(cfg, "timings", "yes");
  CHECK(cfg.timings);
  apply_config_entry(cfg, "timings", "0");
  CHECK(!cfg.timings);
  apply_config_entry(cfg, "model", "logistic");
  CHECK(cfg.nuisance.model_kind == ModelKind::Logistic);
  apply_config_entry(cfg, "propensity", "known");
  CHECK(cfg.nuisance.propensity_mode == PropensityMode::Known);
  apply_config_entry(cfg, "folds", "7");
  CHECK(cfg.nuisance.folds == 7);
  apply_config_entry(cfg, "subgroup", "x_prior=1");
  CHECK(cfg.subgroup == "x_prior=1");

  CHECK_THROWS_AS(apply_config_entry(cfg, "colour", "red"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(cfg, "alpha", "lots"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(cfg, "seed", "4.5"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(cfg, "l01", "1,two"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(cfg, "timings", "maybe"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(cfg, "model", "forest"), ConfigError);
  CHECK_THROWS_AS(apply_config_entry(cfg, "propensity", "guessed"), ConfigError);
}

TEST_CASE("config files allow comments and insist on key = value") {
  const std::string path = tmp_path("cfg");
  {
    std::ofstream f(path);
    f << "# run settings\n"
      << "seed = 9\n"
      << "\n"
      << "l01 = 0.5,2   # grid\n"
      << "comparison = ai_vs_human\n";
  }
  RunConfig cfg;
  load_config_file(cfg, path);
  CHECK(cfg.seed == 9);
  CHECK(cfg.l01 == std::vector<double>({0.5, 2.0}));
  CHECK(cfg.comparison == "ai_vs_human");

  {
    std::ofstream f(path);
    f << "seed 9\n";
  }
  RunConfig bad;
  CHECK_THROWS_AS(load_config_file(bad, path), ConfigError);
  CHECK_THROWS_AS(load_config_file(bad, tmp_path("no_such_config")), IoError);
  std::remove(path.c_str());
}

TEST_CASE("failures map to stable exit codes") {
  RunConfig cfg;
  cfg.command = "evaluate";
  CHECK(run(cfg).code == 2);  // missing --input

  cfg.input_path = tmp_path("missing.csv");
  RunResult r = run(cfg);
  CHECK(r.code == 3);
  CHECK(r.err.find("io error") != std::string::npos);

  cfg.command = "transcend";
  CHECK(run(cfg).code == 2);

  RunConfig b;
  b.command = "bounds";
  b.input_path = fixture_path("table1.csv");
  b.comparison = "human_vs_human_ai";
  RunResult rb = run(b);
  CHECK(rb.code == 2);  // point-identified pairing has no bounds to report
  b.comparison = "sideways";
  CHECK(run(b).code == 2);

  RunConfig oc;
  oc.command = "oracle-check";
  oc.oracle_populations = 0;
  CHECK(run(oc).code == 2);
}

TEST_CASE("simulate writes a loadable, replayable csv") {
  RunConfig cfg;
  cfg.command = "simulate";
  cfg.preset = "four_strata";
  cfg.sim_n = 800;
  cfg.seed = 21;
  CHECK(run(cfg).code == 2);  // --out required

  const std::string path = tmp_path("sim.csv");
  cfg.output_path = path;
  RunResult r = run(cfg);
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["command"] == "simulate");
  CHECK(rep["n"] == 800);
  CHECK(rep["has_scores"] == true);

  Dataset ds = load_dataset(path);
  CHECK(ds.n() == 800);
  CHECK(ds.has_scores());

  const std::string first = slurp(path);
  REQUIRE(run(cfg).code == 0);
  CHECK(slurp(path) == first);  // same seed, same bytes
  cfg.seed = 22;
  REQUIRE(run(cfg).code == 0);
  CHECK(slurp(path) != first);
  std::remove(path.c_str());
}

TEST_CASE("evaluate reports the trial fixture faithfully") {
  RunConfig cfg;
  cfg.command = "evaluate";
  cfg.input_path = fixture_path("table1.csv");
  RunResult r = run(cfg);
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["data"]["n"] == 1891);
  CHECK(rep["data"]["arm0"] == 943);
  CHECK(rep["data"]["arm1"] == 948);
  CHECK(double(rep["agreement"]["arm0"]["agreement"]) == doctest::Approx(0.699).epsilon(1e-3));
  CHECK(double(rep["agreement"]["arm1"]["agreement"]) == doctest::Approx(0.755).epsilon(1e-3));
  CHECK(double(rep["agreement"]["diff"]) == doctest::Approx(0.056).epsilon(2e-2));
  REQUIRE(rep["estimates"].size() == 1);
  CHECK(rep["estimates"][0]["l01"] == 1.0);
  CHECK(double(rep["estimates"][0]["se"]) > 0.0);
  CHECK(rep["metrics"].contains("fnp_diff"));
  CHECK(rep["metrics"].contains("fpp_diff"));
  CHECK(rep["metrics"].contains("misclass_diff"));
  CHECK(!rep.contains("elapsed_ms"));

  // identical configuration, identical bytes
  CHECK(run_report(cfg) == run_report(cfg));
  CHECK(run_report(cfg) == r.out);

  cfg.timings = true;
  json timed = json::parse(run_report(cfg));
  CHECK(timed.contains("elapsed_ms"));

  // reports can be routed to a file instead of stdout
  cfg.timings = false;
  cfg.output_path = tmp_path("eval.json");
  RunResult rf = run(cfg);
  REQUIRE(rf.code == 0);
  CHECK(rf.out.empty());
  CHECK(slurp(cfg.output_path) == r.out);
  std::remove(cfg.output_path.c_str());
}

TEST_CASE("bounds reports carry both endpoints and the width display") {
  RunConfig cfg;
  cfg.command = "bounds";
  cfg.comparison = "ai_vs_human";
  cfg.input_path = fixture_path("table1.csv");
  apply_config_entry(cfg, "l01", "0.5,1,2");
  RunResult r = run(cfg);
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  REQUIRE(rep["bounds"].size() == 3);
  for (const auto& entry : rep["bounds"]) {
    CHECK(double(entry["lower"]) <= double(entry["upper"]));
    CHECK(double(entry["width"]) ==
          doctest::Approx(double(entry["upper"]) - double(entry["lower"])).epsilon(1e-12));
    CHECK(double(entry["se_lower"]) > 0.0);
  }
  // the single-stratum fixture has both arms populated, so detention
  // prevalence ranges are reportable
  CHECK(rep["detention_available"] == true);
  CHECK(rep["detention"].contains("theta_a0"));
  CHECK(rep["detention"].contains("xi_a1_z0"));
  CHECK(run_report(cfg) == r.out);
}

TEST_CASE("prefer reports label runs over the loss grid") {
  RunConfig cfg;
  cfg.command = "prefer";
  cfg.comparison = "ai_vs_human";
  cfg.input_path = fixture_path("table1.csv");
  RunResult r = run(cfg);
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["first"] == "ai");
  CHECK(rep["second"] == "human");
  REQUIRE(rep["points"].size() == 400);  // default grid
  double prev = 0.0;
  std::size_t covered = 0;
  for (const auto& p : rep["points"]) {
    CHECK(double(p["l01"]) > prev);
    prev = double(p["l01"]);
  }
  for (const auto& run_entry : rep["runs"]) covered += std::size_t(run_entry["points"]);
  CHECK(covered == 400);

  apply_config_entry(cfg, "l01", "1,2");
  json small = json::parse(run(cfg).out);
  CHECK(small["points"].size() == 2);
}

TEST_CASE("learn-policy reports one cell per score combination") {
  // policy learning needs score columns, which the trial fixture lacks
  RunConfig cfg;
  cfg.command = "learn-policy";
  cfg.input_path = fixture_path("table1.csv");
  RunResult no_scores = run(cfg);
  CHECK(no_scores.code == 3);

  RunConfig sim;
  sim.command = "simulate";
  sim.preset = "four_strata";
  sim.sim_n = 3000;
  sim.seed = 23;
  sim.output_path = tmp_path("policy.csv");
  REQUIRE(run(sim).code == 0);

  cfg.input_path = sim.output_path;
  RunResult r = run(cfg);
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["kind"] == "provision");
  CHECK(rep["direction"] == "increasing");
  CHECK(rep["l01"] == 1.0);
  REQUIRE(rep["cells"].size() == 72);
  std::size_t count = 0, selected = 0;
  for (const auto& c : rep["cells"]) {
    count += std::size_t(c["count"]);
    selected += c["selected"] == true ? 1 : 0;
  }
  CHECK(count == 3000);
  CHECK(rep["selected_cells"] == selected);
  CHECK(double(rep["value"]) <= 1e-15);

  apply_config_entry(cfg, "l01", "1,2");
  CHECK(run(cfg).code == 2);  // a policy is fit at one loss ratio
  std::remove(sim.output_path.c_str());
}

TEST_CASE("oracle-check certifies closed forms against enumeration") {
  RunConfig cfg;
  cfg.command = "oracle-check";
  cfg.oracle_populations = 3;
  cfg.oracle_strata = 2;
  cfg.seed = 5;
  RunResult r = run(cfg);
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["ok"] == true);
  // 6 prevalence targets, 6 difference targets, 3 per-system targets per population
  CHECK(rep["checks"] == 45);
  CHECK(rep["containment_failures"] == 0);
  CHECK(double(rep["max_discrepancy"]) <= 1e-8);
  CHECK(run_report(cfg) == r.out);
}
