#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "deceval/nuisance.hpp"

namespace deceval {

// Everything a subcommand needs, filled from defaults, then a config file,
// then command-line flags, in that order.
struct RunConfig {
  std::string command;
  std::string input_path;
  std::string output_path;  // empty writes the report to stdout
  std::uint64_t seed = 0;
  std::vector<double> l01;  // empty: {1} for estimates, the default grid for prefer
  double alpha = 0.05;
  std::string comparison = "human_vs_human_ai";
  std::string subgroup;  // "x_name=value" terms joined by commas
  std::string direction = "increasing";
  std::string kind = "provision";
  bool timings = false;
  NuisanceConfig nuisance;
  // simulate
  std::string preset = "four_strata";
  std::size_t sim_n = 5000;
  // oracle-check
  int oracle_strata = 4;
  int oracle_populations = 20;
  double oracle_tolerance = 1e-8;
};

// Flat "key = value" lines; '#' comments; unknown keys reject.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);
void load_config_file(RunConfig& cfg, const std::string& path);

// Serialized report (pretty JSON, sorted keys, trailing newline). Identical
// inputs produce identical bytes; wall-clock timings appear only on request.
std::string run_report(const RunConfig& cfg);

// Executes the command, writes report/artifacts, maps failures to exit codes:
// 0 ok, 2 configuration, 3 data or I/O, 4 numeric.
int run_main(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace deceval
