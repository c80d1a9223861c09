#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "deceval/data.hpp"
#include "deceval/nuisance.hpp"
#include "deceval/stats.hpp"

namespace deceval {

// Doubly-robust per-record summands for the risk of system z. The summand is
// affine in the false-positive loss: phi_z(l01) = a[z] + l01 * b[z], with
// E a[z] = false-negative proportion and E b[z] = -(true-negative proportion).
// Caching the two bases lets a loss grid be swept without touching nuisances.
struct InfluenceBases {
  std::size_t n = 0;
  std::vector<double> a[2];
  std::vector<double> b[2];
};

InfluenceBases influence_bases(const Dataset& ds, const NuisanceFit& fit);

// Uncentered influence value phi_z for one record at the given loss.
double influence_human(const Dataset& ds, const NuisanceFit& fit, std::size_t record_index, int z,
                       const LossSpec& loss);

struct RiskDiffEstimate {
  double beta_hat = 0.0;
  double variance_hat = 0.0;  // variance of sqrt(n) * beta_hat
  std::size_t n = 0;
  std::vector<double> influence;  // centered per-record contributions, mean square = variance_hat

  double se() const;
  Interval ci(double alpha) const;
};

// R(system z=1) - R(system z=0) at the given loss; arm 1 saw the AI recommendation.
RiskDiffEstimate estimate_risk_difference(const Dataset& ds, const NuisanceFit& fit,
                                          const LossSpec& loss);
RiskDiffEstimate estimate_risk_difference(const InfluenceBases& bases, const LossSpec& loss);

enum class MetricKind { FnpDiff, FppDiff, MisclassDiff };

struct MetricDiffEstimate {
  MetricKind metric;
  RiskDiffEstimate diff;
  // Per-arm false-negative proportion is identified and always reported; the
  // per-arm false-positive proportion is not identified and never is.
  double fnp_arm[2] = {0.0, 0.0};
  double fnp_arm_variance[2] = {0.0, 0.0};
};

MetricDiffEstimate estimate_metric_difference(const Dataset& ds, const NuisanceFit& fit,
                                              MetricKind metric);

// Difference in risk under loss weights (l00, l01, l11) with l10 fixed at 1.
RiskDiffEstimate estimate_generic_loss_difference(const Dataset& ds, const NuisanceFit& fit,
                                                  double l00, double l01, double l11);

struct SubgroupOptions {
  bool refit = true;  // refit nuisances inside the subgroup; false reuses the parent fit
  NuisanceConfig refit_config;
};

struct SubgroupData {
  Dataset ds;
  NuisanceFit fit;
};

// Restriction of (ds, fit) to records satisfying pred; any estimator can then
// run on the pair unchanged.
SubgroupData make_subgroup(const Dataset& ds, const NuisanceFit& fit,
                           const std::function<bool(const CaseRecord&)>& pred,
                           const SubgroupOptions& opt);

RiskDiffEstimate subgroup_risk_difference(const Dataset& ds, const NuisanceFit& fit,
                                          const std::function<bool(const CaseRecord&)>& pred,
                                          const LossSpec& loss, const SubgroupOptions& opt);

}  // namespace deceval
