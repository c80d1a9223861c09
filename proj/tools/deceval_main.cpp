#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "deceval/errors.hpp"
#include "deceval/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Evaluates human, human-with-recommendation and recommendation-alone "
      "decision systems from single-blinded trial data."};

  deceval::RunConfig cfg;
  std::string config_path, input, out, comparison, subgroup, direction, kind, preset;
  std::uint64_t seed = 0;
  std::size_t sim_n = 0;
  int strata = 0, populations = 0;
  double alpha = 0, tolerance = 0;
  std::vector<double> l01;
  bool timings = false;

  app.add_option("command", cfg.command,
                 "evaluate | bounds | prefer | learn-policy | simulate | oracle-check")
      ->required()
      ->check(CLI::IsMember(
          {"evaluate", "bounds", "prefer", "learn-policy", "simulate", "oracle-check"}));
  auto* o_input = app.add_option("--input", input, "case-level csv");
  auto* o_config = app.add_option("--config", config_path, "key = value config file");
  auto* o_out = app.add_option("--out", out, "report destination; simulate writes its csv here");
  auto* o_seed = app.add_option("--seed", seed, "rng seed");
  auto* o_l01 = app.add_option("--l01", l01, "false-positive loss ratio, repeatable");
  auto* o_alpha = app.add_option("--alpha", alpha, "test and interval level");
  auto* o_cmp = app.add_option("--comparison", comparison,
                               "human_vs_human_ai | ai_vs_human | ai_vs_human_ai");
  auto* o_sub = app.add_option("--subgroup", subgroup, "x_name=value terms joined by commas");
  auto* o_dir = app.add_option("--direction", direction, "increasing | decreasing");
  auto* o_kind = app.add_option("--kind", kind, "provision | follow");
  auto* o_preset = app.add_option("--preset", preset, "simulate population preset");
  auto* o_n = app.add_option("--n", sim_n, "simulate sample size");
  auto* o_strata = app.add_option("--strata", strata, "oracle-check strata per population");
  auto* o_pops = app.add_option("--populations", populations, "oracle-check population count");
  auto* o_tol = app.add_option("--tolerance", tolerance, "oracle-check discrepancy tolerance");
  app.add_flag("--timings", timings, "include wall time in the report");

  CLI11_PARSE(app, argc, argv);

  try {
    // config file first, explicit flags override
    if (o_config->count()) deceval::load_config_file(cfg, config_path);
    if (o_input->count()) cfg.input_path = input;
    if (o_out->count()) cfg.output_path = out;
    if (o_seed->count()) cfg.seed = seed;
    if (o_l01->count()) cfg.l01 = l01;
    if (o_alpha->count()) cfg.alpha = alpha;
    if (o_cmp->count()) cfg.comparison = comparison;
    if (o_sub->count()) cfg.subgroup = subgroup;
    if (o_dir->count()) cfg.direction = direction;
    if (o_kind->count()) cfg.kind = kind;
    if (o_preset->count()) cfg.preset = preset;
    if (o_n->count()) cfg.sim_n = sim_n;
    if (o_strata->count()) cfg.oracle_strata = strata;
    if (o_pops->count()) cfg.oracle_populations = populations;
    if (o_tol->count()) cfg.oracle_tolerance = tolerance;
    if (timings) cfg.timings = true;
  } catch (const deceval::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const deceval::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  }

  return deceval::run_main(cfg, std::cout, std::cerr);
}
