#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "deceval/bounds.hpp"
#include "deceval/data.hpp"
#include "deceval/nuisance.hpp"

namespace deceval {

// One covariate stratum of a fully specified synthetic population. The joint
// covers (A, D(0), D(1), Y(0)); Y(1) is never modeled because no implemented
// functional depends on it.
struct OracleStratum {
  double mass = 0.0;
  double e = 0.5;          // P(Z = 1 | x)
  double joint[16] = {};   // P(A=a, D(0)=d0, D(1)=d1, Y(0)=y | x), index a*8 + d0*4 + d1*2 + y
  int fta = -1, nca = -1, nvca = -1;  // optional risk-score labels carried into samples

  double cell(int a, int d0, int d1, int y) const { return joint[a * 8 + d0 * 4 + d1 * 2 + y]; }
};

struct OraclePopulation {
  std::vector<OracleStratum> strata;

  bool has_scores() const;
  void validate() const;  // masses sum to 1, joints are distributions, e interior
};

std::vector<StratumObservables> observables_from_population(const OraclePopulation& pop);

// i.i.d. draws under the single-blinded observation rule: y carries Y(0) when
// the realized decision is 0 and an independent non-informative coin otherwise.
Dataset sample_dataset(const OraclePopulation& pop, std::size_t n, std::uint64_t seed);

// Exact functionals by stratum-weighted enumeration.
ConfusionMatrix oracle_confusion(const OraclePopulation& pop, SystemKind system);
double oracle_system_risk(const OraclePopulation& pop, SystemKind system, double l01);
double oracle_risk_difference(const OraclePopulation& pop, double l01);  // with-AI minus human-alone
double oracle_identified_risk_difference(const OraclePopulation& pop, double l01);  // observables-only route
double oracle_ai_vs_system_difference(const OraclePopulation& pop, int z, double l01);
double oracle_theta(const OraclePopulation& pop, int a);
double oracle_xi(const OraclePopulation& pop, int a, int z);
double oracle_alt_metric(const OraclePopulation& pop, AltMetric metric, SystemKind system);
double oracle_generic_rule_risk(const OraclePopulation& pop, const DecisionRule& rule, double l01);
// Provision value: selected strata contribute their with-AI-minus-human risk
// change. Follow value: selected strata contribute their worst-case excess of
// AI over human-alone.
double oracle_policy_value(const OraclePopulation& pop, const std::function<bool(int)>& selected,
                           double l01, bool follow);

// Brute-force extremes over every joint consistent with the observables. The
// only unidentified quantities are P(Y(0)=1 | D(z)=1, A=a, x) in [0,1], tied
// across z by the consistency of P(Y(0)=1, A=a | x); per stratum the feasible
// set is a segment whose endpoints are enumerated exactly.
enum class LpTarget { Theta, Xi, AiVsSystemDiff, SystemRisk, GenericRule };

struct LpQuery {
  LpTarget target = LpTarget::Theta;
  int a = 0;                            // Theta, Xi
  int z = 0;                            // Xi, AiVsSystemDiff
  SystemKind system = SystemKind::Human;  // SystemRisk
  double l01 = 1.0;
  const DecisionRule* rule = nullptr;   // GenericRule
};

IntervalBound oracle_sharp_bounds(const std::vector<StratumObservables>& obs, const LpQuery& q);

enum class DgpPreset {
  Null,             // recommendation changes nothing, everything independent
  AiHarmful,        // AI adds pure false positives over an always-release human
  AiHelpful,        // AI matches Y(0) exactly, human makes false positives
  FourStrata,       // heterogeneous strata with real assignment effects
  AgreesWithHuman,  // A coincides with D(0) = D(1)
  AlwaysRelease,    // D identically 0: nothing is unidentified
};

OraclePopulation preset_population(DgpPreset preset);
OraclePopulation random_population(std::uint64_t seed, int n_strata, double concentration = 1.0);

// One record per observable cell with exact probabilities and true nuisance
// values, so E[estimator] is a weighted average of production summands.
struct PopulationEvaluation {
  Dataset cells;
  NuisanceFit fit;
  std::vector<double> weight;  // P(cell), sums to 1
};

PopulationEvaluation population_evaluation(const OraclePopulation& pop);

}  // namespace deceval
