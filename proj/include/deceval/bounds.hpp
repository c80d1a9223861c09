#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "deceval/data.hpp"
#include "deceval/nuisance.hpp"
#include "deceval/stats.hpp"

namespace deceval {

// Everything a covariate stratum reveals about the observable joint law.
// Built either from raw data (unsmoothed frequencies) or from a synthetic
// population, so closed-form bounds and the LP certifier share one input type.
struct StratumObservables {
  double mass = 1.0;       // P(X = x)
  double e1 = 0.5;         // P(Z = 1 | x)
  double pa1 = 0.0;        // P(A = 1 | x), arm-pooled
  double y1d0[2][2] = {};  // [z][a] = P(Y=1, D=0, A=a | Z=z, x)
  double y0d0[2][2] = {};  // [z][a] = P(Y=0, D=0, A=a | Z=z, x)
  double d1[2][2] = {};    // [z][a] = P(D=1, A=a | Z=z, x)

  double p_a(int a) const { return a ? pa1 : 1.0 - pa1; }
};

// Frequencies per stratum; lenient mode substitutes the present arm for a
// missing one (needed under resampling), strict mode throws EmptyCell.
std::vector<StratumObservables> observables_from_dataset(const Dataset& ds, bool lenient = false);

struct IntervalBound {
  double lo = 0.0;
  double hi = 0.0;
  bool collapsed = false;                // endpoints crossed and were merged at the midpoint
  bool degenerate_denominator = false;   // a ratio denominator's bounds touched zero
  double pre_clamp_lo = 0.0, pre_clamp_hi = 0.0;
};

// P(Y(0)=1, D=1, A=a) where D is the realized (Z-mixed) decision.
IntervalBound theta_bounds(const StratumObservables& s, int a);
IntervalBound aggregate_theta_bounds(const std::vector<StratumObservables>& strata, int a);

// P(Y(0)=1, D(z)=1, A=a) for a fixed assignment z.
IntervalBound xi_bounds(const StratumObservables& s, int a, int z);
IntervalBound aggregate_xi_bounds(const std::vector<StratumObservables>& strata, int a, int z);

// Per-record summands for the AI-vs-system-z risk-difference bounds, affine in
// the false-positive loss: lower summand = la + l01*lb, upper = ua + l01*ub.
struct BoundsBases {
  std::size_t n = 0;
  std::vector<double> la[2], lb[2], ua[2], ub[2];
  std::vector<double> width_factor;  // per-record plug-in of the bound-width integrand
};

BoundsBases bounds_bases(const Dataset& ds, const NuisanceFit& fit);

struct BoundEstimate {
  double lower_hat = 0.0;
  double upper_hat = 0.0;
  double v_lower = 0.0;  // variance of sqrt(n) * lower_hat
  double v_upper = 0.0;
  std::size_t n = 0;
  double width_formula = 0.0;  // independent plug-in of the width display
  double pre_clamp_lower = 0.0, pre_clamp_upper = 0.0;
  bool crossed = false;  // lower exceeded upper by more than twice the larger SE

  double se_lower() const;
  double se_upper() const;
  double width() const { return upper_hat - lower_hat; }
  // One-sided-per-endpoint interval covering the parameter with >= 1-alpha.
  Interval im_interval(double alpha) const;
};

// Bounds on R_AI - R_{system z}; z=0 compares against human-alone, z=1 against
// human-with-AI.
BoundEstimate estimate_ai_vs_human_bounds(const Dataset& ds, const NuisanceFit& fit, int z,
                                          const LossSpec& loss);
BoundEstimate estimate_ai_vs_human_bounds(const BoundsBases& bases, int z, const LossSpec& loss);

// Population-level closed forms evaluated on observables (no sampling error);
// the simulation oracle certifies these against an LP over consistent joints.
Interval ai_vs_human_bounds_from_observables(const std::vector<StratumObservables>& strata, int z,
                                             double l01);
double width_formula_from_observables(const std::vector<StratumObservables>& strata, double l01);

enum class SystemKind { Human, HumanAi, Ai };

IntervalBound per_system_risk_bounds(const Dataset& ds, const NuisanceFit& fit, SystemKind system,
                                     const LossSpec& loss);
IntervalBound per_system_bounds_from_observables(const std::vector<StratumObservables>& strata,
                                                 SystemKind system, double l01);

// Decision rule f(a, stratum) in [0,1]: probability of a positive decision
// given the AI recommendation and the covariate stratum.
struct DecisionRule {
  std::function<double(int a, int stratum)> value;
  bool stochastic = false;
};

IntervalBound generic_rule_risk_bounds(const Dataset& ds, const NuisanceFit& fit,
                                       const DecisionRule& rule, const LossSpec& loss);
IntervalBound generic_rule_bounds_from_observables(const std::vector<StratumObservables>& strata,
                                                   const DecisionRule& rule, double l01);

enum class AltMetric { Fnr, Fpr, Fdr };

struct ResampleOptions {
  bool enabled = false;
  int resamples = 1000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
};

struct AltMetricBound {
  IntervalBound interval;
  bool resampled = false;
  Interval percentile;  // outer percentile envelope across resamples
};

AltMetricBound alt_metric_bounds(const Dataset& ds, const NuisanceFit& fit, AltMetric metric,
                                 SystemKind system, const ResampleOptions& opt = {});
IntervalBound alt_metric_bounds_from_observables(const std::vector<StratumObservables>& strata,
                                                 AltMetric metric, SystemKind system);

}  // namespace deceval
