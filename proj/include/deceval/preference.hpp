#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "deceval/bounds.hpp"
#include "deceval/data.hpp"
#include "deceval/nuisance.hpp"
#include "deceval/point_estimator.hpp"

namespace deceval {

// Pairings are ordered: the reported difference is risk(first) - risk(second).
enum class Comparison {
  HumanVsHumanAi,  // point-identified, Wald two-sided
  AiVsHuman,       // AI against the no-recommendation arm, interval test
  AiVsHumanAi,     // AI against the recommendation arm, interval test
};

enum class PreferenceLabel { PreferFirst, PreferSecond, Ambiguous };

std::string first_system_name(Comparison c);
std::string second_system_name(Comparison c);
std::string label_name(Comparison c, PreferenceLabel label);  // e.g. "prefer_human"

struct PreferencePoint {
  double l01 = 1.0;
  PreferenceLabel label = PreferenceLabel::Ambiguous;
  // Estimated difference range at this loss ratio; lower == upper when the
  // comparison is point-identified.
  double lower = 0.0;
  double upper = 0.0;
  double se_lower = 0.0;
  double se_upper = 0.0;
};

struct PreferenceRun {
  std::size_t begin = 0, end = 0;  // grid index range [begin, end)
  PreferenceLabel label = PreferenceLabel::Ambiguous;
  double l01_lo = 0.0, l01_hi = 0.0;
};

struct PreferenceRegion {
  Comparison comparison = Comparison::HumanVsHumanAi;
  double alpha = 0.05;
  std::vector<PreferencePoint> points;  // one per grid value, ascending l01

  std::vector<PreferenceRun> runs() const;  // maximal constant-label segments
};

// 400 log-spaced loss ratios covering [0.01, 100], endpoints exact.
std::vector<double> default_loss_grid();

// One-sided interval tests at level alpha for the partially identified
// pairings: the sign is called only when the whole interval is significantly
// on one side. Rejecting both sides at once signals incoherent inputs.
PreferencePoint label_point(const InfluenceBases& influence, const BoundsBases& bounds,
                            Comparison cmp, double l01, double alpha);

PreferenceRegion invert_preference(const Dataset& ds, const NuisanceFit& fit, Comparison cmp,
                                   const std::vector<double>& grid, double alpha);

}  // namespace deceval
