#include "deceval/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "deceval/rng.hpp"

namespace deceval {

namespace {

void check_observables(const StratumObservables& s) {
  auto ok01 = [](double v) { return v >= -1e-9 && v <= 1.0 + 1e-9; };
  if (!(s.mass >= 0.0) || !ok01(s.e1) || !ok01(s.pa1))
    throw IncoherentInput("stratum mass, propensity, and A share must be probabilities");
  for (int z = 0; z < 2; ++z) {
    double total = 0;
    for (int a = 0; a < 2; ++a) {
      if (s.y1d0[z][a] < -1e-9 || s.y0d0[z][a] < -1e-9 || s.d1[z][a] < -1e-9)
        throw IncoherentInput("negative cell probability");
      total += s.y1d0[z][a] + s.y0d0[z][a] + s.d1[z][a];
    }
    if (total > 1.0 + 1e-6) throw IncoherentInput("conditional cell block exceeds 1");
  }
}

IntervalBound finalize_interval(double lo, double hi, double feas_lo, double feas_hi) {
  IntervalBound out;
  out.pre_clamp_lo = lo;
  out.pre_clamp_hi = hi;
  lo = std::clamp(lo, feas_lo, feas_hi);
  hi = std::clamp(hi, feas_lo, feas_hi);
  if (lo > hi) {
    const double mid = 0.5 * (lo + hi);
    lo = hi = mid;
    out.collapsed = true;
  }
  out.lo = lo;
  out.hi = hi;
  return out;
}

double total_mass(const std::vector<StratumObservables>& strata) {
  double m = 0;
  for (const auto& s : strata) m += s.mass;
  if (!(m > 0)) throw IncoherentInput("strata carry no mass");
  return m;
}

// Mass-weighted average of f over strata (bounds over strata are separable, so
// aggregated sharp bounds are averages of per-stratum sharp bounds).
template <class F>
double average(const std::vector<StratumObservables>& strata, F f) {
  double acc = 0;
  const double m = total_mass(strata);
  for (std::size_t s = 0; s < strata.size(); ++s) acc += strata[s].mass * f(strata[s], int(s));
  return acc / m;
}

double max_z(const double v[2][2], int a) { return std::max(v[0][a], v[1][a]); }

struct XiEnds {
  double lo, hi;
};

XiEnds xi_raw(const StratumObservables& s, int a, int z) {
  const double here = s.y1d0[z][a];
  XiEnds e;
  e.lo = max_z(s.y1d0, a) - here;
  e.hi = s.p_a(a) - here - max_z(s.y0d0, a);
  return e;
}

}  // namespace

std::vector<StratumObservables> observables_from_dataset(const Dataset& ds, bool lenient) {
  const int S = ds.n_strata();
  struct Cnt {
    double n = 0, nz[2] = {0, 0}, a1 = 0;
    double y1d0[2][2] = {}, y0d0[2][2] = {}, d1[2][2] = {};
  };
  std::vector<Cnt> cnt(S);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const CaseRecord& r = ds.records()[i];
    Cnt& c = cnt[ds.stratum_of(i)];
    c.n += 1;
    c.nz[r.z] += 1;
    c.a1 += r.a;
    if (r.d)
      c.d1[r.z][r.a] += 1;
    else if (r.y)
      c.y1d0[r.z][r.a] += 1;
    else
      c.y0d0[r.z][r.a] += 1;
  }
  std::vector<StratumObservables> out;
  for (int s = 0; s < S; ++s) {
    const Cnt& c = cnt[s];
    if (c.n == 0) continue;
    StratumObservables o;
    o.mass = c.n / double(ds.n());
    o.e1 = c.nz[1] / c.n;
    o.pa1 = c.a1 / c.n;
    for (int z = 0; z < 2; ++z) {
      int src = z;
      if (c.nz[z] == 0) {
        if (!lenient)
          throw EmptyCell("stratum " + std::to_string(s) + " has no arm-" + std::to_string(z) +
                          " records");
        src = 1 - z;  // degrade the cross-arm max to the observed arm
      }
      for (int a = 0; a < 2; ++a) {
        o.y1d0[z][a] = c.y1d0[src][a] / c.nz[src];
        o.y0d0[z][a] = c.y0d0[src][a] / c.nz[src];
        o.d1[z][a] = c.d1[src][a] / c.nz[src];
      }
    }
    out.push_back(o);
  }
  return out;
}

IntervalBound theta_bounds(const StratumObservables& s, int a) {
  check_observables(s);
  const double marg = (1.0 - s.e1) * s.y1d0[0][a] + s.e1 * s.y1d0[1][a];
  const double lo = max_z(s.y1d0, a) - marg;
  const double hi = s.p_a(a) - marg - max_z(s.y0d0, a);
  return finalize_interval(lo, hi, 0.0, s.p_a(a));
}

IntervalBound aggregate_theta_bounds(const std::vector<StratumObservables>& strata, int a) {
  IntervalBound out;
  out.lo = average(strata, [a](const StratumObservables& s, int) { return theta_bounds(s, a).lo; });
  out.hi = average(strata, [a](const StratumObservables& s, int) { return theta_bounds(s, a).hi; });
  out.pre_clamp_lo = out.lo;
  out.pre_clamp_hi = out.hi;
  return out;
}

IntervalBound xi_bounds(const StratumObservables& s, int a, int z) {
  check_observables(s);
  if (z != 0 && z != 1) throw ConfigError("z must be 0 or 1");
  const XiEnds e = xi_raw(s, a, z);
  return finalize_interval(e.lo, e.hi, 0.0, s.p_a(a));
}

IntervalBound aggregate_xi_bounds(const std::vector<StratumObservables>& strata, int a, int z) {
  IntervalBound out;
  out.lo =
      average(strata, [a, z](const StratumObservables& s, int) { return xi_bounds(s, a, z).lo; });
  out.hi =
      average(strata, [a, z](const StratumObservables& s, int) { return xi_bounds(s, a, z).hi; });
  out.pre_clamp_lo = out.lo;
  out.pre_clamp_hi = out.hi;
  return out;
}

BoundsBases bounds_bases(const Dataset& ds, const NuisanceFit& fit) {
  const std::size_t n = ds.n();
  if (fit.n != n) throw ConfigError("nuisance fit does not cover this dataset");
  for (int z = 0; z < 2; ++z) {
    if (ds.arm_count(z) == 0) throw EmptyArm(z);
    for (int a = 0; a < 2; ++a)
      if (fit.m_d_a[z][a].empty() || fit.m_y_a[z][a].empty())
        throw MissingAConditionalFit("bounds need A-conditional nuisance models");
  }
  if (fit.m_a.empty()) throw MissingAConditionalFit("bounds need the A-share model");

  BoundsBases out;
  out.n = n;
  for (int z = 0; z < 2; ++z) {
    out.la[z].resize(n);
    out.lb[z].resize(n);
    out.ua[z].resize(n);
    out.ub[z].resize(n);
  }
  out.width_factor.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const CaseRecord& r = ds.records()[i];
    const double a0 = 1.0 - r.a;
    for (int z = 0; z < 2; ++z) {
      const int zo = 1 - z;
      const double md0 = fit.m_d_a[z][0][i], my0 = fit.m_y_a[z][0][i];
      const double md0o = fit.m_d_a[zo][0][i], my0o = fit.m_y_a[zo][0][i];
      const double ez = fit.e_arm(i, z), ezo = fit.e_arm(i, zo);
      const double indz = (r.z == z) ? 1.0 : 0.0;
      const double indo = 1.0 - indz;

      // Doubly-robust summands for P(Y=y, D(z)=0, A=0) and P(D(z)=d', A=a')
      const double corr_y = indz * a0 * (1.0 - r.d) / ez * (r.y - my0);
      const double corr_d = indz * a0 / ez * (r.d - md0);
      const double phi_z1 = a0 * (1.0 - md0) * my0 + corr_y - my0 * corr_d;
      const double phi_z0 = a0 * (1.0 - md0) * (1.0 - my0) - corr_y - (1.0 - my0) * corr_d;
      const double corr_yo = indo * a0 * (1.0 - r.d) / ezo * (r.y - my0o);
      const double corr_do = indo * a0 / ezo * (r.d - md0o);
      const double phi_o1 = a0 * (1.0 - md0o) * my0o + corr_yo - my0o * corr_do;
      const double phi_o0 = a0 * (1.0 - md0o) * (1.0 - my0o) - corr_yo - (1.0 - my0o) * corr_do;
      const double md1 = fit.m_d_a[z][1][i];
      const double phi_d1 = r.a * (1.0 - md1) - indz / ez * r.a * (r.d - md1);
      const double phi_d0 = (1.0 - r.a) * md0 + indz / ez * (1.0 - r.a) * (r.d - md0);

      // Plug-in classifiers: value 1 means the opposite arm attains the max.
      const double gl = ((1.0 - md0o) * my0o >= (1.0 - md0) * my0) ? 1.0 : 0.0;
      const double gu = ((1.0 - md0o) * (1.0 - my0o) >= (1.0 - md0) * (1.0 - my0)) ? 1.0 : 0.0;

      // a-basis of the system-z risk summand at l01 = 0
      const double md = fit.m_d[z][i], my = fit.m_y[z][i];
      const double ty = indz * (1.0 - r.d) / ez * (r.y - my);
      const double td = indz / ez * (r.d - md);
      const double base_a = (1.0 - md) * my + ty - my * td;

      const double p = (phi_z1 - base_a) + gl * (phi_o1 - phi_z1);
      const double pp = (phi_z1 - base_a) - gu * (phi_o0 - phi_z0);
      const double q = phi_d1 - phi_d0;
      out.la[z][i] = p;
      out.lb[z][i] = p + q;
      out.ua[z][i] = pp + phi_d0;
      out.ub[z][i] = pp + phi_d1;
    }
    double v1 = 0, v0 = 0;
    for (int zp = 0; zp < 2; ++zp) {
      const double md0 = fit.m_d_a[zp][0][i], my0 = fit.m_y_a[zp][0][i];
      v1 = std::max(v1, (1.0 - md0) * my0);
      v0 = std::max(v0, (1.0 - md0) * (1.0 - my0));
    }
    out.width_factor[i] = (1.0 - fit.m_a[i]) * (1.0 - v1 - v0);
  }
  return out;
}

double BoundEstimate::se_lower() const { return std::sqrt(v_lower / double(n)); }
double BoundEstimate::se_upper() const { return std::sqrt(v_upper / double(n)); }

Interval BoundEstimate::im_interval(double alpha) const {
  const double z = z_one_sided(alpha);
  return {lower_hat - z * se_lower(), upper_hat + z * se_upper()};
}

BoundEstimate estimate_ai_vs_human_bounds(const BoundsBases& bases, int z, const LossSpec& loss) {
  if (z != 0 && z != 1) throw ConfigError("z must be 0 or 1");
  if (loss.generic) throw ConfigError("bounds support the single-ratio loss only");
  const double l = loss.l01;
  const std::size_t n = bases.n;
  BoundEstimate est;
  est.n = n;
  double suml = 0, sumu = 0, sumw = 0;
  for (std::size_t i = 0; i < n; ++i) {
    suml += bases.la[z][i] + l * bases.lb[z][i];
    sumu += bases.ua[z][i] + l * bases.ub[z][i];
    sumw += bases.width_factor[i];
  }
  double lhat = suml / double(n), uhat = sumu / double(n);
  double ssl = 0, ssu = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dl = bases.la[z][i] + l * bases.lb[z][i] - lhat;
    const double du = bases.ua[z][i] + l * bases.ub[z][i] - uhat;
    ssl += dl * dl;
    ssu += du * du;
  }
  est.v_lower = ssl / double(n);
  est.v_upper = ssu / double(n);
  est.width_formula = (1.0 + l) * sumw / double(n);
  est.pre_clamp_lower = lhat;
  est.pre_clamp_upper = uhat;
  const double feas = 1.0 + l;  // risk differences live in [-(1+l01), 1+l01]
  est.lower_hat = std::clamp(lhat, -feas, feas);
  est.upper_hat = std::clamp(uhat, -feas, feas);
  est.crossed = est.lower_hat > est.upper_hat + 2.0 * std::max(est.se_lower(), est.se_upper());
  return est;
}

BoundEstimate estimate_ai_vs_human_bounds(const Dataset& ds, const NuisanceFit& fit, int z,
                                          const LossSpec& loss) {
  return estimate_ai_vs_human_bounds(bounds_bases(ds, fit), z, loss);
}

Interval ai_vs_human_bounds_from_observables(const std::vector<StratumObservables>& strata, int z,
                                             double l01) {
  if (z != 0 && z != 1) throw ConfigError("z must be 0 or 1");
  const double l = l01;
  auto common = [z](const StratumObservables& s) {
    // P(D(z)=0, A=1 | x) - P(D(z)=1, A=0 | x)
    return (s.y1d0[z][1] + s.y0d0[z][1]) - s.d1[z][0];
  };
  const double lo = average(strata, [&](const StratumObservables& s, int) {
    const double p_here = s.y1d0[z][0] + s.y1d0[z][1];
    return (1.0 + l) * (max_z(s.y1d0, 0) - p_here) + l * common(s);
  });
  const double hi = average(strata, [&](const StratumObservables& s, int) {
    const double p_here = s.y1d0[z][0] + s.y1d0[z][1];
    return (1.0 + l) * (s.p_a(0) - p_here - max_z(s.y0d0, 0)) + l * common(s);
  });
  return {lo, hi};
}

double width_formula_from_observables(const std::vector<StratumObservables>& strata, double l01) {
  return (1.0 + l01) * average(strata, [](const StratumObservables& s, int) {
           return s.p_a(0) - max_z(s.y1d0, 0) - max_z(s.y0d0, 0);
         });
}

static Interval per_system_interval(const std::vector<StratumObservables>& strata,
                                    SystemKind system, double l) {
  if (system == SystemKind::Ai) {
    const double lo = average(strata, [l](const StratumObservables& s, int) {
      return max_z(s.y1d0, 0) + l * max_z(s.y0d0, 1);
    });
    const double hi = average(strata, [l](const StratumObservables& s, int) {
      return (s.p_a(0) - max_z(s.y0d0, 0)) + l * (s.p_a(1) - max_z(s.y1d0, 1));
    });
    return {lo, hi};
  }
  const int z = (system == SystemKind::Human) ? 0 : 1;
  const double p10 = average(
      strata, [z](const StratumObservables& s, int) { return s.y1d0[z][0] + s.y1d0[z][1]; });
  const double pd1 =
      average(strata, [z](const StratumObservables& s, int) { return s.d1[z][0] + s.d1[z][1]; });
  double xi_lo = 0, xi_hi = 0;
  for (int a = 0; a < 2; ++a) {
    const IntervalBound xi = aggregate_xi_bounds(strata, a, z);
    xi_lo += xi.lo;
    xi_hi += xi.hi;
  }
  const double p01_lo = std::max(0.0, pd1 - xi_hi);
  const double p01_hi = std::max(0.0, pd1 - xi_lo);
  return {p10 + l * p01_lo, p10 + l * p01_hi};
}

IntervalBound per_system_bounds_from_observables(const std::vector<StratumObservables>& strata,
                                                 SystemKind system, double l01) {
  const Interval iv = per_system_interval(strata, system, l01);
  return finalize_interval(iv.lo, iv.hi, 0.0, std::max(1.0, l01));
}

IntervalBound per_system_risk_bounds(const Dataset& ds, const NuisanceFit& fit, SystemKind system,
                                     const LossSpec& loss) {
  if (fit.n != ds.n()) throw ConfigError("nuisance fit does not cover this dataset");
  if (loss.generic) throw ConfigError("bounds support the single-ratio loss only");
  for (int z = 0; z < 2; ++z)
    if (ds.arm_count(z) == 0) throw EmptyArm(z);
  return per_system_bounds_from_observables(observables_from_dataset(ds), system, loss.l01);
}

IntervalBound generic_rule_bounds_from_observables(const std::vector<StratumObservables>& strata,
                                                   const DecisionRule& rule, double l01) {
  const double l = l01;
  double lo = 0, hi = 0;
  const double m = total_mass(strata);
  for (std::size_t si = 0; si < strata.size(); ++si) {
    const StratumObservables& s = strata[si];
    for (int a = 0; a < 2; ++a) {
      const double pa = s.p_a(a);
      if (pa <= 0.0) continue;
      const double f = rule.value(a, int(si));
      if (!(f >= 0.0 && f <= 1.0)) throw RuleRangeError("rule value outside [0,1]");
      if (!rule.stochastic && f != 0.0 && f != 1.0)
        throw RuleRangeError("deterministic rule must take values in {0,1}");
      // conditionals given (A=a, x), with the arm-pooled A share as denominator
      const double max_p1 = max_z(s.y1d0, a) / pa;
      const double max_p0 = max_z(s.y0d0, a) / pa;
      const double w = s.mass * pa / m;
      if (!rule.stochastic) {
        lo += w * ((1.0 - f) * max_p1 + l * f * max_p0);
        hi += w * ((1.0 - f) * (1.0 - max_p0) + l * f * (1.0 - max_p1));
      } else {
        const double c = 1.0 - (1.0 + l) * f;
        const double g = (c >= 0.0) ? 1.0 : 0.0;
        lo += w * (l * f + c * (g * max_p1 + (1.0 - g) * (1.0 - max_p0)));
        hi += w * (l * f + c * (g * (1.0 - max_p0) + (1.0 - g) * max_p1));
      }
    }
  }
  return finalize_interval(lo, hi, 0.0, std::max(1.0, l));
}

IntervalBound generic_rule_risk_bounds(const Dataset& ds, const NuisanceFit& fit,
                                       const DecisionRule& rule, const LossSpec& loss) {
  if (fit.n != ds.n()) throw ConfigError("nuisance fit does not cover this dataset");
  if (loss.generic) throw ConfigError("bounds support the single-ratio loss only");
  for (int z = 0; z < 2; ++z)
    if (ds.arm_count(z) == 0) throw EmptyArm(z);
  return generic_rule_bounds_from_observables(observables_from_dataset(ds), rule, loss.l01);
}

IntervalBound alt_metric_bounds_from_observables(const std::vector<StratumObservables>& strata,
                                                 AltMetric metric, SystemKind system) {
  // Identified human-side components per arm
  double p10_h[2], p00_h[2], pd1_h[2], p11_lo[2], p11_hi[2], p01_lo_h[2], p01_hi_h[2];
  for (int z = 0; z < 2; ++z) {
    p10_h[z] = average(
        strata, [z](const StratumObservables& s, int) { return s.y1d0[z][0] + s.y1d0[z][1]; });
    p00_h[z] = average(
        strata, [z](const StratumObservables& s, int) { return s.y0d0[z][0] + s.y0d0[z][1]; });
    pd1_h[z] =
        average(strata, [z](const StratumObservables& s, int) { return s.d1[z][0] + s.d1[z][1]; });
    p11_lo[z] = aggregate_xi_bounds(strata, 0, z).lo + aggregate_xi_bounds(strata, 1, z).lo;
    p11_hi[z] = aggregate_xi_bounds(strata, 0, z).hi + aggregate_xi_bounds(strata, 1, z).hi;
    p01_lo_h[z] = std::max(0.0, pd1_h[z] - p11_hi[z]);
    p01_hi_h[z] = std::max(0.0, pd1_h[z] - p11_lo[z]);
  }

  bool degenerate = false;
  auto ratio = [&degenerate](double num, double den, double fallback) {
    if (den <= 1e-12) {
      degenerate = true;
      return fallback;
    }
    return num / den;
  };

  double lo = 0, hi = 1;
  if (system != SystemKind::Ai) {
    const int z = (system == SystemKind::Human) ? 0 : 1;
    switch (metric) {
      case AltMetric::Fnr:
        lo = ratio(p10_h[z], p10_h[z] + p11_hi[z], 0.0);
        hi = ratio(p10_h[z], p10_h[z] + p11_lo[z], 1.0);
        break;
      case AltMetric::Fpr:
        lo = ratio(p01_lo_h[z], p00_h[z] + p01_hi_h[z], 0.0);
        hi = ratio(p01_hi_h[z], p00_h[z] + p01_lo_h[z], 1.0);
        break;
      case AltMetric::Fdr:
        lo = ratio(p01_lo_h[z], pd1_h[z], 0.0);
        hi = ratio(p01_hi_h[z], pd1_h[z], 1.0);
        break;
    }
  } else {
    const double p10_ai_lo =
        average(strata, [](const StratumObservables& s, int) { return max_z(s.y1d0, 0); });
    const double p10_ai_hi = average(
        strata, [](const StratumObservables& s, int) { return s.p_a(0) - max_z(s.y0d0, 0); });
    const double p01_ai_lo =
        average(strata, [](const StratumObservables& s, int) { return max_z(s.y0d0, 1); });
    const double p01_ai_hi = average(
        strata, [](const StratumObservables& s, int) { return s.p_a(1) - max_z(s.y1d0, 1); });
    const double pa1 =
        average(strata, [](const StratumObservables& s, int) { return s.pa1; });
    switch (metric) {
      case AltMetric::Fnr:
        lo = ratio(p10_ai_lo, std::max(p10_h[0] + p11_hi[0], p10_h[1] + p11_hi[1]), 0.0);
        hi = ratio(p10_ai_hi, std::min(p10_h[0] + p11_lo[0], p10_h[1] + p11_lo[1]), 1.0);
        break;
      case AltMetric::Fpr:
        lo = ratio(p01_ai_lo, std::max(p00_h[0] + p01_hi_h[0], p00_h[1] + p01_hi_h[1]), 0.0);
        hi = ratio(p01_ai_hi, std::min(p00_h[0] + p01_lo_h[0], p00_h[1] + p01_lo_h[1]), 1.0);
        break;
      case AltMetric::Fdr:
        lo = ratio(p01_ai_lo, pa1, 0.0);
        hi = ratio(p01_ai_hi, pa1, 1.0);
        break;
    }
  }
  if (degenerate) hi = 1.0;
  IntervalBound out = finalize_interval(lo, hi, 0.0, 1.0);
  out.degenerate_denominator = degenerate;
  return out;
}

AltMetricBound alt_metric_bounds(const Dataset& ds, const NuisanceFit& fit, AltMetric metric,
                                 SystemKind system, const ResampleOptions& opt) {
  if (fit.n != ds.n()) throw ConfigError("nuisance fit does not cover this dataset");
  for (int z = 0; z < 2; ++z)
    if (ds.arm_count(z) == 0) throw EmptyArm(z);
  AltMetricBound out;
  out.interval = alt_metric_bounds_from_observables(observables_from_dataset(ds), metric, system);
  if (!opt.enabled || opt.resamples <= 0) return out;

  // Nonparametric percentile envelope: resample records with replacement and
  // take one-sided quantiles of the two endpoints.
  const std::size_t n = ds.n();
  Rng rng(hash_combine(opt.seed, 0x626f6f74ull));
  std::vector<double> los, his;
  los.reserve(opt.resamples);
  his.reserve(opt.resamples);
  std::vector<CaseRecord> draw(n);
  for (int b = 0; b < opt.resamples; ++b) {
    for (std::size_t i = 0; i < n; ++i)
      draw[i] = ds.records()[std::size_t(rng.uniform_int(int(n)))];
    Dataset boot(ds.schema(), draw);
    const IntervalBound iv =
        alt_metric_bounds_from_observables(observables_from_dataset(boot, true), metric, system);
    los.push_back(iv.lo);
    his.push_back(iv.hi);
  }
  std::sort(los.begin(), los.end());
  std::sort(his.begin(), his.end());
  auto quant = [](const std::vector<double>& v, double q) {
    const double pos = q * double(v.size() - 1);
    const std::size_t idx = std::size_t(std::llround(pos));
    return v[std::min(idx, v.size() - 1)];
  };
  out.resampled = true;
  out.percentile = {quant(los, opt.alpha), quant(his, 1.0 - opt.alpha)};
  return out;
}

}  // namespace deceval
