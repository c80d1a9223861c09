#include "deceval/preference.hpp"

#include <algorithm>
#include <cmath>

#include "deceval/errors.hpp"
#include "deceval/stats.hpp"

namespace deceval {

std::string first_system_name(Comparison c) {
  return c == Comparison::HumanVsHumanAi ? "human" : "ai";
}

std::string second_system_name(Comparison c) {
  return c == Comparison::AiVsHuman ? "human" : "human_ai";
}

std::string label_name(Comparison c, PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::PreferFirst:
      return "prefer_" + first_system_name(c);
    case PreferenceLabel::PreferSecond:
      return "prefer_" + second_system_name(c);
    case PreferenceLabel::Ambiguous:
      return "ambiguous";
  }
  throw ConfigError("unknown label");
}

std::vector<double> default_loss_grid() {
  const int k = 400;
  const double lo = std::log(0.01), hi = std::log(100.0);
  std::vector<double> grid(k);
  for (int i = 0; i < k; ++i) grid[i] = std::exp(lo + (hi - lo) * double(i) / double(k - 1));
  grid.front() = 0.01;
  grid.back() = 100.0;
  return grid;
}

namespace {

// Sign of x relative to a z*se band; se == 0 degenerates to a sign test.
bool above_band(double x, double se, double z) { return se > 0 ? x > z * se : x > 0; }
bool below_band(double x, double se, double z) { return se > 0 ? x < -z * se : x < 0; }

}  // namespace

PreferencePoint label_point(const InfluenceBases& influence, const BoundsBases& bounds,
                            Comparison cmp, double l01, double alpha) {
  PreferencePoint pt;
  pt.l01 = l01;
  const LossSpec loss = LossSpec::simple(l01);

  if (cmp == Comparison::HumanVsHumanAi) {
    const RiskDiffEstimate est = estimate_risk_difference(influence, loss);
    // est.beta_hat is risk(human_ai) - risk(human); first listed is human
    const double delta = -est.beta_hat;
    const double se = est.se();
    pt.lower = pt.upper = delta;
    pt.se_lower = pt.se_upper = se;
    const double z = z_two_sided(alpha);
    if (above_band(delta, se, z))
      pt.label = PreferenceLabel::PreferSecond;
    else if (below_band(delta, se, z))
      pt.label = PreferenceLabel::PreferFirst;
    return pt;
  }

  const int z_arm = cmp == Comparison::AiVsHuman ? 0 : 1;
  const BoundEstimate est = estimate_ai_vs_human_bounds(bounds, z_arm, loss);
  pt.lower = est.lower_hat;
  pt.upper = est.upper_hat;
  pt.se_lower = est.se_lower();
  pt.se_upper = est.se_upper();
  const double z = z_one_sided(alpha);
  const bool lower_positive = above_band(est.lower_hat, pt.se_lower, z);
  const bool upper_negative = below_band(est.upper_hat, pt.se_upper, z);
  if (lower_positive && upper_negative)
    throw ContradictoryRejection("interval tests rejected both signs at l01=" +
                                 std::to_string(l01));
  if (lower_positive)
    pt.label = PreferenceLabel::PreferSecond;
  else if (upper_negative)
    pt.label = PreferenceLabel::PreferFirst;
  return pt;
}

PreferenceRegion invert_preference(const Dataset& ds, const NuisanceFit& fit, Comparison cmp,
                                   const std::vector<double>& grid, double alpha) {
  if (grid.empty()) throw ConfigError("loss grid is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  for (double l : grid)
    if (!(l > 0)) throw ConfigError("loss ratios must be positive");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw ConfigError("loss grid must be ascending");

  const InfluenceBases influence = influence_bases(ds, fit);
  BoundsBases bounds;
  if (cmp != Comparison::HumanVsHumanAi) bounds = bounds_bases(ds, fit);

  PreferenceRegion region;
  region.comparison = cmp;
  region.alpha = alpha;
  region.points.reserve(grid.size());
  for (double l : grid) region.points.push_back(label_point(influence, bounds, cmp, l, alpha));
  return region;
}

std::vector<PreferenceRun> PreferenceRegion::runs() const {
  std::vector<PreferenceRun> out;
  for (std::size_t i = 0; i < points.size();) {
    std::size_t j = i + 1;
    while (j < points.size() && points[j].label == points[i].label) ++j;
    out.push_back({i, j, points[i].label, points[i].l01, points[j - 1].l01});
    i = j;
  }
  return out;
}

}  // namespace deceval
