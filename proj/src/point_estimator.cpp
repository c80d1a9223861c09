#include "deceval/point_estimator.hpp"

#include <cmath>

namespace deceval {

namespace {

void require_both_arms(const Dataset& ds) {
  for (int z = 0; z < 2; ++z)
    if (ds.arm_count(z) == 0) throw EmptyArm(z);
}

// Centered-mean estimate from per-record summands delta_i.
RiskDiffEstimate from_summands(std::vector<double> delta) {
  RiskDiffEstimate est;
  est.n = delta.size();
  double sum = 0;
  for (double d : delta) sum += d;
  est.beta_hat = sum / double(est.n);
  double ss = 0;
  for (double& d : delta) {
    d -= est.beta_hat;
    ss += d * d;
  }
  est.variance_hat = ss / double(est.n);
  est.influence = std::move(delta);
  return est;
}

}  // namespace

InfluenceBases influence_bases(const Dataset& ds, const NuisanceFit& fit) {
  const std::size_t n = ds.n();
  if (fit.n != n) throw ConfigError("nuisance fit does not cover this dataset");
  InfluenceBases out;
  out.n = n;
  for (int z = 0; z < 2; ++z) {
    out.a[z].resize(n);
    out.b[z].resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const CaseRecord& r = ds.records()[i];
    for (int z = 0; z < 2; ++z) {
      const double md = fit.m_d[z][i];
      const double my = fit.m_y[z][i];
      const double ez = fit.e_arm(i, z);
      const double ind = (r.z == z) ? 1.0 : 0.0;
      const double ty = ind * (1.0 - r.d) / ez * (r.y - my);
      const double td = ind / ez * (r.d - md);
      out.a[z][i] = (1.0 - md) * my + ty - my * td;
      out.b[z][i] = (1.0 - md) * (my - 1.0) + ty - (my - 1.0) * td;
    }
  }
  return out;
}

double influence_human(const Dataset& ds, const NuisanceFit& fit, std::size_t record_index, int z,
                       const LossSpec& loss) {
  if (record_index >= ds.n() || fit.n != ds.n()) throw ConfigError("record index out of range");
  if (z != 0 && z != 1) throw ConfigError("z must be 0 or 1");
  const std::size_t i = record_index;
  const CaseRecord& r = ds.records()[i];
  const double md = fit.m_d[z][i];
  const double my = fit.m_y[z][i];
  const double ez = fit.e_arm(i, z);
  const double l = loss.l01;
  const double ind = (r.z == z) ? 1.0 : 0.0;
  return (1.0 - md) * ((1.0 + l) * my - l) +
         (1.0 + l) * ind * (1.0 - r.d) / ez * (r.y - my) -
         ((1.0 + l) * my - l) * ind / ez * (r.d - md);
}

double RiskDiffEstimate::se() const { return std::sqrt(variance_hat / double(n)); }

Interval RiskDiffEstimate::ci(double alpha) const {
  const double half = z_two_sided(alpha) * se();
  return {beta_hat - half, beta_hat + half};
}

RiskDiffEstimate estimate_risk_difference(const InfluenceBases& bases, const LossSpec& loss) {
  if (loss.generic)
    throw ConfigError("generic losses go through estimate_generic_loss_difference");
  std::vector<double> delta(bases.n);
  for (std::size_t i = 0; i < bases.n; ++i)
    delta[i] = (bases.a[1][i] - bases.a[0][i]) + loss.l01 * (bases.b[1][i] - bases.b[0][i]);
  return from_summands(std::move(delta));
}

RiskDiffEstimate estimate_risk_difference(const Dataset& ds, const NuisanceFit& fit,
                                          const LossSpec& loss) {
  require_both_arms(ds);
  return estimate_risk_difference(influence_bases(ds, fit), loss);
}

MetricDiffEstimate estimate_metric_difference(const Dataset& ds, const NuisanceFit& fit,
                                              MetricKind metric) {
  require_both_arms(ds);
  const InfluenceBases bases = influence_bases(ds, fit);
  MetricDiffEstimate out;
  out.metric = metric;
  std::vector<double> delta(bases.n);
  for (std::size_t i = 0; i < bases.n; ++i) {
    const double da = bases.a[1][i] - bases.a[0][i];
    const double db = bases.b[1][i] - bases.b[0][i];
    switch (metric) {
      case MetricKind::FnpDiff:
        delta[i] = da;
        break;
      case MetricKind::FppDiff:
        // p01 difference equals the negated p00 difference, and E b[z] = -p00(z).
        delta[i] = db;
        break;
      case MetricKind::MisclassDiff:
        delta[i] = da + db;
        break;
    }
  }
  out.diff = from_summands(std::move(delta));
  for (int z = 0; z < 2; ++z) {
    double sum = 0;
    for (double v : bases.a[z]) sum += v;
    out.fnp_arm[z] = sum / double(bases.n);
    double ss = 0;
    for (double v : bases.a[z]) ss += (v - out.fnp_arm[z]) * (v - out.fnp_arm[z]);
    out.fnp_arm_variance[z] = ss / double(bases.n);
  }
  return out;
}

RiskDiffEstimate estimate_generic_loss_difference(const Dataset& ds, const NuisanceFit& fit,
                                                  double l00, double l01, double l11) {
  require_both_arms(ds);
  if (!(l00 >= 0.0 && l01 >= 0.0 && l11 >= 0.0))
    throw ConfigError("loss weights must be nonnegative");
  const InfluenceBases bases = influence_bases(ds, fit);
  std::vector<double> delta(bases.n);
  // risk difference = (1 - l11) * (p10 diff) + (l00 - l01) * (p00 diff)
  for (std::size_t i = 0; i < bases.n; ++i) {
    const double da = bases.a[1][i] - bases.a[0][i];
    const double db = bases.b[1][i] - bases.b[0][i];
    delta[i] = (1.0 - l11) * da + (l00 - l01) * (-db);
  }
  return from_summands(std::move(delta));
}

SubgroupData make_subgroup(const Dataset& ds, const NuisanceFit& fit,
                           const std::function<bool(const CaseRecord&)>& pred,
                           const SubgroupOptions& opt) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.n(); ++i)
    if (pred(ds.records()[i])) keep.push_back(i);
  if (keep.empty()) throw EmptySubgroup("subgroup predicate matches no records");
  std::vector<CaseRecord> records;
  records.reserve(keep.size());
  for (std::size_t i : keep) records.push_back(ds.records()[i]);
  SubgroupData out{Dataset(ds.schema(), std::move(records)), NuisanceFit{}};
  for (int z = 0; z < 2; ++z)
    if (out.ds.arm_count(z) == 0) throw EmptyArm(z);
  if (opt.refit) {
    NuisanceConfig cfg = opt.refit_config;
    if (std::size_t(cfg.folds) > out.ds.n()) cfg.folds = int(out.ds.n());
    if (cfg.folds < 2) throw ConfigError("subgroup too small to cross-fit");
    out.fit = fit_nuisance(out.ds, cfg);
  } else {
    if (fit.n != ds.n()) throw ConfigError("nuisance fit does not cover this dataset");
    NuisanceFit sub;
    sub.n = keep.size();
    sub.n_folds = fit.n_folds;
    auto take = [&keep](const std::vector<double>& src, std::vector<double>& dst) {
      if (src.empty()) return;
      dst.resize(keep.size());
      for (std::size_t j = 0; j < keep.size(); ++j) dst[j] = src[keep[j]];
    };
    sub.fold.resize(keep.size());
    for (std::size_t j = 0; j < keep.size(); ++j) sub.fold[j] = fit.fold[keep[j]];
    take(fit.e1, sub.e1);
    take(fit.m_a, sub.m_a);
    for (int z = 0; z < 2; ++z) {
      take(fit.m_d[z], sub.m_d[z]);
      take(fit.m_y[z], sub.m_y[z]);
      take(fit.p_a_given_z[z], sub.p_a_given_z[z]);
      for (int a = 0; a < 2; ++a) {
        take(fit.m_d_a[z][a], sub.m_d_a[z][a]);
        take(fit.m_y_a[z][a], sub.m_y_a[z][a]);
      }
    }
    sub.diagnostics = fit.diagnostics;
    out.fit = std::move(sub);
  }
  return out;
}

RiskDiffEstimate subgroup_risk_difference(const Dataset& ds, const NuisanceFit& fit,
                                          const std::function<bool(const CaseRecord&)>& pred,
                                          const LossSpec& loss, const SubgroupOptions& opt) {
  SubgroupData sub = make_subgroup(ds, fit, pred, opt);
  return estimate_risk_difference(sub.ds, sub.fit, loss);
}

}  // namespace deceval
