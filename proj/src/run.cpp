#include "deceval/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "deceval/bounds.hpp"
#include "deceval/data.hpp"
#include "deceval/errors.hpp"
#include "deceval/point_estimator.hpp"
#include "deceval/policy.hpp"
#include "deceval/preference.hpp"
#include "deceval/sim_oracle.hpp"

namespace deceval {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean value for " + key + ": " + v);
}

Comparison parse_comparison(const std::string& s) {
  if (s == "human_vs_human_ai") return Comparison::HumanVsHumanAi;
  if (s == "ai_vs_human") return Comparison::AiVsHuman;
  if (s == "ai_vs_human_ai") return Comparison::AiVsHumanAi;
  throw ConfigError("unknown comparison: " + s);
}

PolicyDirection parse_direction(const std::string& s) {
  if (s == "increasing") return PolicyDirection::Increasing;
  if (s == "decreasing") return PolicyDirection::Decreasing;
  throw ConfigError("unknown direction: " + s);
}

PolicyKind parse_kind(const std::string& s) {
  if (s == "provision") return PolicyKind::Provision;
  if (s == "follow") return PolicyKind::Follow;
  throw ConfigError("unknown policy kind: " + s);
}

DgpPreset parse_preset(const std::string& s) {
  if (s == "null") return DgpPreset::Null;
  if (s == "ai_harmful") return DgpPreset::AiHarmful;
  if (s == "ai_helpful") return DgpPreset::AiHelpful;
  if (s == "four_strata") return DgpPreset::FourStrata;
  if (s == "agrees_with_human") return DgpPreset::AgreesWithHuman;
  if (s == "always_release") return DgpPreset::AlwaysRelease;
  throw ConfigError("unknown preset: " + s);
}

SubgroupDef parse_subgroup(const std::string& s) {
  SubgroupDef def;
  def.name = s;
  std::stringstream ss(s);
  std::string term;
  while (std::getline(ss, term, ',')) {
    term = trim(term);
    const std::size_t eq = term.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("subgroup terms look like name=value: " + term);
    const std::string name = trim(term.substr(0, eq));
    def.equals.emplace_back(name, int(parse_u64("subgroup value", trim(term.substr(eq + 1)))));
  }
  if (def.equals.empty()) throw ConfigError("empty subgroup definition");
  return def;
}

std::vector<double> loss_grid(const RunConfig& cfg, bool for_prefer) {
  if (cfg.l01.empty()) return for_prefer ? default_loss_grid() : std::vector<double>{1.0};
  std::vector<double> grid = cfg.l01;
  std::sort(grid.begin(), grid.end());
  for (double l : grid)
    if (!(l > 0)) throw ConfigError("l01 must be positive");
  return grid;
}

json data_block(const Dataset& ds) {
  const DatasetSummary s = summarize(ds);
  return json{{"n", s.n},
              {"arm0", s.n_arm0},
              {"arm1", s.n_arm1},
              {"n_strata", ds.n_strata()},
              {"released", s.n_d0},
              {"outcome_prevalence_released", s.outcome_prevalence_d0}};
}

json diagnostics_block(const NuisanceFit& fit) {
  const NuisanceDiagnostics& d = fit.diagnostics;
  return json{{"degenerate_lookups", d.degenerate_lookups},
              {"clipped_propensity", d.clipped_propensity},
              {"recommendation_rate_arm0", d.p_a_arm[0]},
              {"recommendation_rate_arm1", d.p_a_arm[1]},
              {"recommendation_imbalance", d.a_imbalance}};
}

json agreement_json(const AgreementTable& t) {
  return json{{"n", t.n},
              {"agreement", t.agreement},
              {"counts", {{t.count[0][0], t.count[0][1]}, {t.count[1][0], t.count[1][1]}}},
              {"props", {{t.prop[0][0], t.prop[0][1]}, {t.prop[1][0], t.prop[1][1]}}}};
}

struct LoadedData {
  Dataset ds;
  NuisanceFit fit;
  bool subgrouped = false;
};

LoadedData load_and_fit(const RunConfig& cfg) {
  if (cfg.input_path.empty()) throw ConfigError("--input is required for " + cfg.command);
  Dataset ds = load_dataset(cfg.input_path);
  NuisanceConfig ncfg = cfg.nuisance;
  ncfg.seed = cfg.seed;
  NuisanceFit fit = fit_nuisance(ds, ncfg);
  LoadedData out{std::move(ds), std::move(fit), false};
  if (!cfg.subgroup.empty()) {
    const SubgroupDef def = parse_subgroup(cfg.subgroup);
    SubgroupOptions opt;
    opt.refit = true;
    opt.refit_config = ncfg;
    SubgroupData sub =
        make_subgroup(out.ds, out.fit, subgroup_predicate(out.ds.schema(), def), opt);
    out.ds = std::move(sub.ds);
    out.fit = std::move(sub.fit);
    out.subgrouped = true;
  }
  return out;
}

json run_evaluate(const RunConfig& cfg) {
  const LoadedData ld = load_and_fit(cfg);
  json rep;
  rep["command"] = "evaluate";
  rep["version"] = kVersion;
  rep["data"] = data_block(ld.ds);
  rep["diagnostics"] = diagnostics_block(ld.fit);
  if (ld.subgrouped) rep["subgroup"] = cfg.subgroup;

  const AgreementDiff agr = agreement_difference(ld.ds);
  rep["agreement"] = json{{"arm0", agreement_json(agr.arm0)},
                          {"arm1", agreement_json(agr.arm1)},
                          {"diff", agr.diff},
                          {"se", agr.se}};

  const InfluenceBases bases = influence_bases(ld.ds, ld.fit);
  json estimates = json::array();
  for (double l : loss_grid(cfg, false)) {
    const RiskDiffEstimate est = estimate_risk_difference(bases, LossSpec::simple(l));
    const Interval ci = est.ci(cfg.alpha);
    estimates.push_back(json{{"l01", l},
                             {"risk_diff", est.beta_hat},
                             {"se", est.se()},
                             {"alpha", cfg.alpha},
                             {"ci", {ci.lo, ci.hi}}});
  }
  rep["estimates"] = estimates;

  json metrics;
  const char* names[3] = {"fnp_diff", "fpp_diff", "misclass_diff"};
  const MetricKind kinds[3] = {MetricKind::FnpDiff, MetricKind::FppDiff, MetricKind::MisclassDiff};
  for (int k = 0; k < 3; ++k) {
    const MetricDiffEstimate m = estimate_metric_difference(ld.ds, ld.fit, kinds[k]);
    json entry{{"diff", m.diff.beta_hat}, {"se", m.diff.se()}};
    if (kinds[k] == MetricKind::FnpDiff) {
      entry["arm0"] = m.fnp_arm[0];
      entry["arm1"] = m.fnp_arm[1];
    }
    metrics[names[k]] = entry;
  }
  rep["metrics"] = metrics;
  return rep;
}

json interval_json(const IntervalBound& b) {
  json out{{"lower", b.lo}, {"upper", b.hi}};
  if (b.collapsed) out["collapsed"] = true;
  return out;
}

json run_bounds(const RunConfig& cfg) {
  const Comparison cmp = parse_comparison(cfg.comparison);
  if (cmp == Comparison::HumanVsHumanAi)
    throw ConfigError("human_vs_human_ai is point-identified; use evaluate");
  const int z = cmp == Comparison::AiVsHuman ? 0 : 1;
  const LoadedData ld = load_and_fit(cfg);

  json rep;
  rep["command"] = "bounds";
  rep["version"] = kVersion;
  rep["comparison"] = cfg.comparison;
  rep["data"] = data_block(ld.ds);
  if (ld.subgrouped) rep["subgroup"] = cfg.subgroup;

  const BoundsBases bases = bounds_bases(ld.ds, ld.fit);
  json entries = json::array();
  for (double l : loss_grid(cfg, false)) {
    const BoundEstimate est = estimate_ai_vs_human_bounds(bases, z, LossSpec::simple(l));
    const Interval im = est.im_interval(cfg.alpha);
    entries.push_back(json{{"l01", l},
                           {"lower", est.lower_hat},
                           {"upper", est.upper_hat},
                           {"se_lower", est.se_lower()},
                           {"se_upper", est.se_upper()},
                           {"width", est.width()},
                           {"width_formula", est.width_formula},
                           {"alpha", cfg.alpha},
                           {"interval", {im.lo, im.hi}},
                           {"crossed", est.crossed}});
  }
  rep["bounds"] = entries;

  // Detention-prevalence display needs every stratum observed in both arms.
  try {
    const std::vector<StratumObservables> obs = observables_from_dataset(ld.ds);
    json det;
    for (int a = 0; a < 2; ++a) {
      det["theta_a" + std::to_string(a)] = interval_json(aggregate_theta_bounds(obs, a));
      for (int az = 0; az < 2; ++az)
        det["xi_a" + std::to_string(a) + "_z" + std::to_string(az)] =
            interval_json(aggregate_xi_bounds(obs, a, az));
    }
    rep["detention"] = det;
    rep["detention_available"] = true;
  } catch (const EmptyCell&) {
    rep["detention_available"] = false;
  }
  return rep;
}

json run_prefer(const RunConfig& cfg) {
  const Comparison cmp = parse_comparison(cfg.comparison);
  const LoadedData ld = load_and_fit(cfg);
  const std::vector<double> grid = loss_grid(cfg, true);
  const PreferenceRegion region = invert_preference(ld.ds, ld.fit, cmp, grid, cfg.alpha);

  json rep;
  rep["command"] = "prefer";
  rep["version"] = kVersion;
  rep["comparison"] = cfg.comparison;
  rep["alpha"] = cfg.alpha;
  rep["first"] = first_system_name(cmp);
  rep["second"] = second_system_name(cmp);
  rep["data"] = data_block(ld.ds);
  if (ld.subgrouped) rep["subgroup"] = cfg.subgroup;

  json runs = json::array();
  for (const PreferenceRun& r : region.runs())
    runs.push_back(json{{"label", label_name(cmp, r.label)},
                        {"l01_lo", r.l01_lo},
                        {"l01_hi", r.l01_hi},
                        {"points", r.end - r.begin}});
  rep["runs"] = runs;

  json points = json::array();
  for (const PreferencePoint& p : region.points)
    points.push_back(json{{"l01", p.l01},
                          {"label", label_name(cmp, p.label)},
                          {"lower", p.lower},
                          {"upper", p.upper}});
  rep["points"] = points;
  return rep;
}

json run_learn_policy(const RunConfig& cfg) {
  const LoadedData ld = load_and_fit(cfg);
  const std::vector<double> grid = loss_grid(cfg, false);
  if (grid.size() != 1) throw ConfigError("learn-policy takes a single l01");
  const MonotonePolicy policy = learn_policy(ld.ds, ld.fit, grid[0], parse_kind(cfg.kind),
                                             parse_direction(cfg.direction));
  const PolicyValueEstimate value = evaluate_policy_value(ld.ds, ld.fit, policy);

  json rep;
  rep["command"] = "learn_policy";
  rep["version"] = kVersion;
  rep["kind"] = cfg.kind;
  rep["direction"] = cfg.direction;
  rep["l01"] = grid[0];
  rep["data"] = data_block(ld.ds);
  if (ld.subgrouped) rep["subgroup"] = cfg.subgroup;
  rep["value"] = policy.value;
  rep["value_se"] = value.se();

  std::size_t n_sel = 0, rec_sel = 0, rec_tot = 0;
  json cells = json::array();
  for (const PolicyCell& c : policy.cells) {
    json entry;
    for (std::size_t k = 0; k < policy.lattice.axes().size(); ++k)
      entry[policy.lattice.axes()[k].name] = c.scores[k];
    entry["count"] = c.count;
    entry["weight"] = c.weight;
    entry["mean"] = c.mean;
    entry["selected"] = c.selected;
    cells.push_back(entry);
    rec_tot += c.count;
    if (c.selected) {
      ++n_sel;
      rec_sel += c.count;
    }
  }
  rep["cells"] = cells;
  rep["selected_cells"] = n_sel;
  rep["selected_share"] = rec_tot ? double(rec_sel) / double(rec_tot) : 0.0;
  return rep;
}

json run_simulate(const RunConfig& cfg) {
  if (cfg.output_path.empty()) throw ConfigError("simulate writes a csv; --out is required");
  const OraclePopulation pop = preset_population(parse_preset(cfg.preset));
  const Dataset ds = sample_dataset(pop, cfg.sim_n, cfg.seed);
  std::ofstream out(cfg.output_path);
  if (!out) throw IoError("cannot write " + cfg.output_path);
  write_csv(ds, out);
  if (!out.good()) throw IoError("short write to " + cfg.output_path);

  json rep;
  rep["command"] = "simulate";
  rep["version"] = kVersion;
  rep["preset"] = cfg.preset;
  rep["n"] = cfg.sim_n;
  rep["seed"] = cfg.seed;
  rep["output"] = cfg.output_path;
  rep["n_strata"] = ds.n_strata();
  rep["has_scores"] = ds.has_scores();
  return rep;
}

json run_oracle_check(const RunConfig& cfg) {
  if (cfg.oracle_populations < 1) throw ConfigError("populations must be positive");
  if (cfg.oracle_strata < 1) throw ConfigError("strata must be positive");
  const double slack = 1e-9;  // truth containment slack for float roundoff
  double max_disc = 0;
  long long contain_failures = 0, checks = 0;

  const auto note = [&](const IntervalBound& closed, const IntervalBound& lp, double truth) {
    max_disc = std::max({max_disc, std::fabs(closed.lo - lp.lo), std::fabs(closed.hi - lp.hi)});
    if (truth < lp.lo - slack || truth > lp.hi + slack) ++contain_failures;
    ++checks;
  };

  for (int p = 0; p < cfg.oracle_populations; ++p) {
    const OraclePopulation pop = random_population(cfg.seed + std::uint64_t(p), cfg.oracle_strata);
    const std::vector<StratumObservables> obs = observables_from_population(pop);
    for (int a = 0; a < 2; ++a) {
      LpQuery q;
      q.target = LpTarget::Theta;
      q.a = a;
      note(aggregate_theta_bounds(obs, a), oracle_sharp_bounds(obs, q), oracle_theta(pop, a));
      for (int z = 0; z < 2; ++z) {
        q.target = LpTarget::Xi;
        q.z = z;
        note(aggregate_xi_bounds(obs, a, z), oracle_sharp_bounds(obs, q), oracle_xi(pop, a, z));
      }
    }
    for (int z = 0; z < 2; ++z)
      for (double l : {0.5, 1.0, 5.0}) {
        const Interval c = ai_vs_human_bounds_from_observables(obs, z, l);
        LpQuery q;
        q.target = LpTarget::AiVsSystemDiff;
        q.z = z;
        q.l01 = l;
        IntervalBound closed;
        closed.lo = c.lo;
        closed.hi = c.hi;
        note(closed, oracle_sharp_bounds(obs, q), oracle_ai_vs_system_difference(pop, z, l));
      }
    const SystemKind systems[3] = {SystemKind::Human, SystemKind::HumanAi, SystemKind::Ai};
    for (SystemKind sys : systems) {
      LpQuery q;
      q.target = LpTarget::SystemRisk;
      q.system = sys;
      q.l01 = 1.0;
      note(per_system_bounds_from_observables(obs, sys, 1.0), oracle_sharp_bounds(obs, q),
           oracle_system_risk(pop, sys, 1.0));
    }
  }

  json rep;
  rep["command"] = "oracle_check";
  rep["version"] = kVersion;
  rep["populations"] = cfg.oracle_populations;
  rep["strata"] = cfg.oracle_strata;
  rep["seed"] = cfg.seed;
  rep["checks"] = checks;
  rep["max_discrepancy"] = max_disc;
  rep["containment_failures"] = contain_failures;
  rep["tolerance"] = cfg.oracle_tolerance;
  const bool ok = max_disc <= cfg.oracle_tolerance && contain_failures == 0;
  rep["ok"] = ok;
  if (!ok)
    throw NumericError("oracle check failed: max discrepancy " + std::to_string(max_disc) +
                       ", containment failures " + std::to_string(contain_failures));
  return rep;
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "input")
    cfg.input_path = value;
  else if (key == "out")
    cfg.output_path = value;
  else if (key == "seed")
    cfg.seed = parse_u64(key, value);
  else if (key == "alpha")
    cfg.alpha = parse_double(key, value);
  else if (key == "l01") {
    cfg.l01.clear();
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.l01.push_back(parse_double(key, trim(tok)));
  } else if (key == "comparison")
    cfg.comparison = value;
  else if (key == "subgroup")
    cfg.subgroup = value;
  else if (key == "direction")
    cfg.direction = value;
  else if (key == "kind")
    cfg.kind = value;
  else if (key == "timings")
    cfg.timings = parse_bool(key, value);
  else if (key == "propensity") {
    if (value == "known")
      cfg.nuisance.propensity_mode = PropensityMode::Known;
    else if (value == "estimated")
      cfg.nuisance.propensity_mode = PropensityMode::Estimated;
    else
      throw ConfigError("propensity must be known or estimated");
  } else if (key == "known_propensity")
    cfg.nuisance.known_propensity = parse_double(key, value);
  else if (key == "model") {
    if (value == "frequency")
      cfg.nuisance.model_kind = ModelKind::StratifiedFrequency;
    else if (value == "logistic")
      cfg.nuisance.model_kind = ModelKind::Logistic;
    else
      throw ConfigError("model must be frequency or logistic");
  } else if (key == "smoothing")
    cfg.nuisance.smoothing = parse_double(key, value);
  else if (key == "folds")
    cfg.nuisance.folds = int(parse_u64(key, value));
  else if (key == "clip")
    cfg.nuisance.clip_eta = parse_double(key, value);
  else if (key == "preset")
    cfg.preset = value;
  else if (key == "n")
    cfg.sim_n = std::size_t(parse_u64(key, value));
  else if (key == "strata")
    cfg.oracle_strata = int(parse_u64(key, value));
  else if (key == "populations")
    cfg.oracle_populations = int(parse_u64(key, value));
  else if (key == "tolerance")
    cfg.oracle_tolerance = parse_double(key, value);
  else
    throw ConfigError("unknown config key: " + key);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string run_report(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  json rep;
  if (cfg.command == "evaluate")
    rep = run_evaluate(cfg);
  else if (cfg.command == "bounds")
    rep = run_bounds(cfg);
  else if (cfg.command == "prefer")
    rep = run_prefer(cfg);
  else if (cfg.command == "learn-policy")
    rep = run_learn_policy(cfg);
  else if (cfg.command == "simulate")
    rep = run_simulate(cfg);
  else if (cfg.command == "oracle-check")
    rep = run_oracle_check(cfg);
  else
    throw ConfigError("unknown command: " + cfg.command);
  if (cfg.timings) {
    // off by default so repeated runs stay byte-identical
    const std::chrono::duration<double, std::milli> ms = std::chrono::steady_clock::now() - start;
    rep["elapsed_ms"] = ms.count();
  }
  return rep.dump(2) + "\n";
}

int run_main(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    std::string report = run_report(cfg);
    // simulate's --out is the csv; its report always goes to stdout
    if (!cfg.output_path.empty() && cfg.command != "simulate") {
      std::ofstream f(cfg.output_path);
      if (!f) throw IoError("cannot write " + cfg.output_path);
      f << report;
      if (!f.good()) throw IoError("short write to " + cfg.output_path);
    } else {
      out << report;
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace deceval
