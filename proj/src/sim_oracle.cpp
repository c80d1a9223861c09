#include "deceval/sim_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "deceval/rng.hpp"

namespace deceval {

namespace {

// Marginals of one stratum's joint that every functional is built from.
struct Marginals {
  double pa[2] = {};         // P(A=a)
  double d1[2] = {};         // P(D(z)=1)
  double y1 = 0;             // P(Y0=1)
  double y1a[2] = {};        // P(Y0=1, A=a)
  double y1d0[2][2] = {};    // [z][a] P(Y0=1, D(z)=0, A=a)
  double y0d0[2][2] = {};
  double d1a[2][2] = {};     // [z][a] P(D(z)=1, A=a)
  double y1dz0[2] = {};      // P(Y0=1, D(z)=0)
};

Marginals marginals(const OracleStratum& s) {
  Marginals m;
  for (int a = 0; a < 2; ++a)
    for (int d0 = 0; d0 < 2; ++d0)
      for (int d1 = 0; d1 < 2; ++d1)
        for (int y = 0; y < 2; ++y) {
          const double p = s.cell(a, d0, d1, y);
          const int dz[2] = {d0, d1};
          m.pa[a] += p;
          m.y1 += y * p;
          m.y1a[a] += y * p;
          for (int z = 0; z < 2; ++z) {
            if (dz[z]) {
              m.d1[z] += p;
              m.d1a[z][a] += p;
            } else {
              if (y)
                m.y1d0[z][a] += p;
              else
                m.y0d0[z][a] += p;
              m.y1dz0[z] += y * p;
            }
          }
        }
  return m;
}

ConfusionMatrix human_confusion(const Marginals& m, int z) {
  ConfusionMatrix cm;
  cm.p10 = m.y1dz0[z];
  cm.p11 = m.y1 - m.y1dz0[z];
  cm.p01 = m.d1[z] - cm.p11;
  cm.p00 = 1.0 - cm.p10 - cm.p11 - cm.p01;
  return cm;
}

ConfusionMatrix ai_confusion(const Marginals& m) {
  ConfusionMatrix cm;
  cm.p11 = m.y1a[1];
  cm.p10 = m.y1 - m.y1a[1];
  cm.p01 = m.pa[1] - m.y1a[1];
  cm.p00 = 1.0 - cm.p10 - cm.p11 - cm.p01;
  return cm;
}

double human_risk_x(const Marginals& m, int z, double l) {
  const ConfusionMatrix cm = human_confusion(m, z);
  return cm.p10 + l * cm.p01;
}

template <class F>
double pop_average(const OraclePopulation& pop, F f) {
  double acc = 0;
  for (std::size_t s = 0; s < pop.strata.size(); ++s)
    acc += pop.strata[s].mass * f(marginals(pop.strata[s]), int(s));
  return acc;
}

OracleStratum stratum_from(double mass, double e,
                           const std::function<double(int, int, int, int)>& p) {
  OracleStratum s;
  s.mass = mass;
  s.e = e;
  for (int a = 0; a < 2; ++a)
    for (int d0 = 0; d0 < 2; ++d0)
      for (int d1 = 0; d1 < 2; ++d1)
        for (int y = 0; y < 2; ++y) s.joint[a * 8 + d0 * 4 + d1 * 2 + y] = p(a, d0, d1, y);
  return s;
}

double bern(int v, double p1) { return v ? p1 : 1.0 - p1; }

}  // namespace

bool OraclePopulation::has_scores() const {
  if (strata.empty()) return false;
  for (const auto& s : strata)
    if (s.fta < 1 || s.fta > 6 || s.nca < 1 || s.nca > 6 || s.nvca < 0 || s.nvca > 1) return false;
  return true;
}

void OraclePopulation::validate() const {
  if (strata.empty()) throw ConfigError("population needs at least one stratum");
  double mass = 0;
  for (const auto& s : strata) {
    if (!(s.mass >= 0)) throw ConfigError("stratum mass must be nonnegative");
    if (!(s.e >= 0.01 && s.e <= 0.99)) throw ConfigError("propensity must lie in [0.01, 0.99]");
    double total = 0;
    for (double p : s.joint) {
      if (!(p >= 0)) throw ConfigError("joint cells must be nonnegative");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-12) throw ConfigError("joint cells must sum to 1");
    mass += s.mass;
  }
  if (std::fabs(mass - 1.0) > 1e-12) throw ConfigError("stratum masses must sum to 1");
}

std::vector<StratumObservables> observables_from_population(const OraclePopulation& pop) {
  std::vector<StratumObservables> out;
  out.reserve(pop.strata.size());
  for (const auto& st : pop.strata) {
    const Marginals m = marginals(st);
    StratumObservables o;
    o.mass = st.mass;
    o.e1 = st.e;
    o.pa1 = m.pa[1];
    for (int z = 0; z < 2; ++z)
      for (int a = 0; a < 2; ++a) {
        o.y1d0[z][a] = m.y1d0[z][a];
        o.y0d0[z][a] = m.y0d0[z][a];
        o.d1[z][a] = m.d1a[z][a];
      }
    out.push_back(o);
  }
  return out;
}

Dataset sample_dataset(const OraclePopulation& pop, std::size_t n, std::uint64_t seed) {
  pop.validate();
  const int S = int(pop.strata.size());
  DatasetSchema schema;
  std::vector<int> levels(S);
  for (int s = 0; s < S; ++s) levels[s] = s;
  schema.covariates.push_back({"x_s", levels});
  const bool scores = pop.has_scores();

  std::vector<double> masses(S);
  for (int s = 0; s < S; ++s) masses[s] = pop.strata[s].mass;
  std::vector<std::vector<double>> cells(S, std::vector<double>(16));
  for (int s = 0; s < S; ++s)
    for (int c = 0; c < 16; ++c) cells[s][c] = pop.strata[s].joint[c];

  Rng rng(hash_combine(seed, 0x73616d706c65ull));
  std::vector<CaseRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int s = rng.discrete(masses);
    const int c = rng.discrete(cells[s]);
    const int a = c >> 3, d0 = (c >> 2) & 1, d1 = (c >> 1) & 1, y0 = c & 1;
    CaseRecord r;
    r.z = std::uint8_t(rng.bernoulli(pop.strata[s].e) ? 1 : 0);
    r.d = std::uint8_t(r.z ? d1 : d0);
    r.a = std::uint8_t(a);
    // Y(0) is visible only through released cases; detained rows carry noise.
    r.y = std::uint8_t(r.d ? (rng.bernoulli(0.5) ? 1 : 0) : y0);
    r.covariates = {s};
    if (scores) {
      r.fta = pop.strata[s].fta;
      r.nca = pop.strata[s].nca;
      r.nvca = pop.strata[s].nvca;
    }
    records.push_back(std::move(r));
  }
  return Dataset(schema, std::move(records));
}

ConfusionMatrix oracle_confusion(const OraclePopulation& pop, SystemKind system) {
  ConfusionMatrix cm{0, 0, 0, 0};
  for (const auto& st : pop.strata) {
    const Marginals m = marginals(st);
    const ConfusionMatrix c =
        system == SystemKind::Ai ? ai_confusion(m) : human_confusion(m, system == SystemKind::Human ? 0 : 1);
    cm.p00 += st.mass * c.p00;
    cm.p01 += st.mass * c.p01;
    cm.p10 += st.mass * c.p10;
    cm.p11 += st.mass * c.p11;
  }
  return cm;
}

double oracle_system_risk(const OraclePopulation& pop, SystemKind system, double l01) {
  return classification_risk(oracle_confusion(pop, system), LossSpec::simple(l01));
}

double oracle_risk_difference(const OraclePopulation& pop, double l01) {
  return oracle_system_risk(pop, SystemKind::HumanAi, l01) -
         oracle_system_risk(pop, SystemKind::Human, l01);
}

double oracle_identified_risk_difference(const OraclePopulation& pop, double l01) {
  return pop_average(pop, [l01](const Marginals& m, int) {
    const double y1d0_1 = m.y1d0[1][0] + m.y1d0[1][1];
    const double y1d0_0 = m.y1d0[0][0] + m.y1d0[0][1];
    const double y0d0_1 = m.y0d0[1][0] + m.y0d0[1][1];
    const double y0d0_0 = m.y0d0[0][0] + m.y0d0[0][1];
    return (y1d0_1 - y1d0_0) - l01 * (y0d0_1 - y0d0_0);
  });
}

double oracle_ai_vs_system_difference(const OraclePopulation& pop, int z, double l01) {
  if (z != 0 && z != 1) throw ConfigError("z must be 0 or 1");
  return oracle_system_risk(pop, SystemKind::Ai, l01) -
         oracle_system_risk(pop, z == 0 ? SystemKind::Human : SystemKind::HumanAi, l01);
}

double oracle_theta(const OraclePopulation& pop, int a) {
  // detention under the realized (arm-mixed) decision, jointly with A=a and Y(0)=1
  double acc = 0;
  for (const auto& st : pop.strata) {
    const Marginals m = marginals(st);
    const double ez[2] = {1.0 - st.e, st.e};
    for (int z = 0; z < 2; ++z) acc += st.mass * ez[z] * (m.y1a[a] - m.y1d0[z][a]);
  }
  return acc;
}

double oracle_xi(const OraclePopulation& pop, int a, int z) {
  return pop_average(pop,
                     [a, z](const Marginals& m, int) { return m.y1a[a] - m.y1d0[z][a]; });
}

double oracle_alt_metric(const OraclePopulation& pop, AltMetric metric, SystemKind system) {
  const ConfusionMatrix cm = oracle_confusion(pop, system);
  switch (metric) {
    case AltMetric::Fnr:
      return cm.p10 / (cm.p10 + cm.p11);
    case AltMetric::Fpr:
      return cm.p01 / (cm.p00 + cm.p01);
    case AltMetric::Fdr:
      return cm.p01 / (cm.p01 + cm.p11);
  }
  throw ConfigError("unknown metric");
}

double oracle_generic_rule_risk(const OraclePopulation& pop, const DecisionRule& rule, double l01) {
  return pop_average(pop, [&rule, l01](const Marginals& m, int s) {
    double acc = 0;
    for (int a = 0; a < 2; ++a) {
      const double f = rule.value(a, s);
      if (!(f >= 0.0 && f <= 1.0)) throw RuleRangeError("rule value outside [0,1]");
      acc += (1.0 - f) * m.y1a[a] + l01 * f * (m.pa[a] - m.y1a[a]);
    }
    return acc;
  });
}

double oracle_policy_value(const OraclePopulation& pop, const std::function<bool(int)>& selected,
                           double l01, bool follow) {
  return pop_average(pop, [&](const Marginals& m, int s) {
    if (!selected(s)) return 0.0;
    if (!follow) return human_risk_x(m, 1, l01) - human_risk_x(m, 0, l01);
    const double max_y0d0a0 = std::max(m.y0d0[0][0], m.y0d0[1][0]);
    return (1.0 + l01) * (m.pa[0] - m.y1dz0[0] - max_y0d0a0) +
           l01 * ((m.pa[1] - m.d1a[0][1]) - m.d1a[0][0]);
  });
}

IntervalBound oracle_sharp_bounds(const std::vector<StratumObservables>& obs, const LpQuery& q) {
  if (obs.empty()) throw IncoherentInput("no strata");
  double mass = 0;
  for (const auto& s : obs) mass += s.mass;
  if (!(mass > 0)) throw IncoherentInput("strata carry no mass");

  double lo = 0, hi = 0;
  for (std::size_t si = 0; si < obs.size(); ++si) {
    const StratumObservables& s = obs[si];
    for (int a = 0; a < 2; ++a) {
      const double c0 = s.y1d0[0][a], c1 = s.y1d0[1][a];
      const double w0 = s.d1[0][a], w1 = s.d1[1][a];
      // t = P(Y(0)=1, A=a | x) must be reachable from both arms
      const double t_lo = std::max(c0, c1);
      double t_hi = std::min(c0 + w0, c1 + w1);
      if (t_lo > t_hi + 1e-9)
        throw InfeasibleObservables("no joint is consistent with these observables");
      t_hi = std::max(t_hi, t_lo);

      auto block = [&](double t) -> double {
        switch (q.target) {
          case LpTarget::Theta: {
            if (a != q.a) return 0.0;
            // realized-decision mixture of P(Y(0)=1, D(z)=1, A=a | x)
            return (1.0 - s.e1) * (t - c0) + s.e1 * (t - c1);
          }
          case LpTarget::Xi:
            if (a != q.a) return 0.0;
            return t - (q.z ? c1 : c0);
          case LpTarget::SystemRisk: {
            if (q.system == SystemKind::Ai)
              return a == 0 ? t : q.l01 * (s.p_a(1) - t);
            const int z = (q.system == SystemKind::Human) ? 0 : 1;
            const double c = z ? c1 : c0, w = z ? w1 : w0;
            return c + q.l01 * (w - (t - c));
          }
          case LpTarget::AiVsSystemDiff: {
            const double c = q.z ? c1 : c0, w = q.z ? w1 : w0;
            const double human = c + q.l01 * (w - (t - c));
            const double ai = (a == 0) ? t : q.l01 * (s.p_a(1) - t);
            return ai - human;
          }
          case LpTarget::GenericRule: {
            const double f = q.rule->value(a, int(si));
            if (!(f >= 0.0 && f <= 1.0)) throw RuleRangeError("rule value outside [0,1]");
            return (1.0 - f) * t + q.l01 * f * (s.p_a(a) - t);
          }
        }
        throw ConfigError("unknown target");
      };
      const double v_lo = block(t_lo), v_hi = block(t_hi);
      lo += s.mass * std::min(v_lo, v_hi);
      hi += s.mass * std::max(v_lo, v_hi);
    }
  }
  IntervalBound out;
  out.lo = lo / mass;
  out.hi = hi / mass;
  out.pre_clamp_lo = out.lo;
  out.pre_clamp_hi = out.hi;
  return out;
}

OraclePopulation preset_population(DgpPreset preset) {
  OraclePopulation pop;
  switch (preset) {
    case DgpPreset::Null: {
      // recommendation-invariant decisions, everything independent, A share
      // equal to D share so observable margins are symmetric across arms
      const double pd[2] = {0.3, 0.4}, py[2] = {0.2, 0.25}, mass[2] = {0.5, 0.5};
      for (int s = 0; s < 2; ++s)
        pop.strata.push_back(stratum_from(mass[s], 0.5, [=](int a, int d0, int d1, int y) {
          if (d0 != d1) return 0.0;
          return bern(a, pd[s]) * bern(d0, pd[s]) * bern(y, py[s]);
        }));
      break;
    }
    case DgpPreset::AiHarmful: {
      // human releases everyone; AI flags 3/8 of the safe cases
      pop.strata.push_back(stratum_from(1.0, 0.5, [](int a, int d0, int d1, int y) {
        if (d0 || d1) return 0.0;
        const double py1 = 0.2;
        const double pa_given_y = y ? 0.0 : 0.375;
        return bern(y, py1) * bern(a, pa_given_y);
      }));
      break;
    }
    case DgpPreset::AiHelpful: {
      // AI reproduces Y(0) exactly; human adds false positives on safe cases
      pop.strata.push_back(stratum_from(1.0, 0.5, [](int a, int d0, int d1, int y) {
        if (d0 != d1) return 0.0;
        const double py1 = 0.3;
        if (a != y) return 0.0;
        const double pd_given_y = y ? 0.0 : 0.5;
        return bern(y, py1) * bern(d0, pd_given_y);
      }));
      break;
    }
    case DgpPreset::FourStrata: {
      const double mass[4] = {0.4, 0.3, 0.2, 0.1};
      const double pa[4] = {0.30, 0.40, 0.50, 0.35};
      const double bd0[4] = {0.20, 0.30, 0.25, 0.40};
      const double bd1[4] = {0.15, 0.20, 0.35, 0.25};
      const double by[4] = {0.15, 0.20, 0.10, 0.25};
      const int fta[4] = {1, 2, 4, 6}, nca[4] = {1, 3, 2, 5}, nvca[4] = {0, 0, 1, 1};
      for (int s = 0; s < 4; ++s) {
        OracleStratum st = stratum_from(mass[s], 0.5, [=](int a, int d0, int d1, int y) {
          const double p_d0 = bd0[s] + 0.10 * a;
          const double p_d1 = bd1[s] + 0.12 * a + 0.30 * d0;
          const double p_y = by[s] + 0.08 * a + 0.15 * d0 + 0.10 * d1;
          return bern(a, pa[s]) * bern(d0, p_d0) * bern(d1, p_d1) * bern(y, p_y);
        });
        st.fta = fta[s];
        st.nca = nca[s];
        st.nvca = nvca[s];
        pop.strata.push_back(st);
      }
      break;
    }
    case DgpPreset::AgreesWithHuman: {
      const double mass[2] = {0.6, 0.4}, pa[2] = {0.3, 0.5};
      const double r0[2] = {0.15, 0.20}, r1[2] = {0.35, 0.40};
      for (int s = 0; s < 2; ++s)
        pop.strata.push_back(stratum_from(mass[s], 0.5, [=](int a, int d0, int d1, int y) {
          if (d0 != a || d1 != a) return 0.0;
          return bern(a, pa[s]) * bern(y, a ? r1[s] : r0[s]);
        }));
      break;
    }
    case DgpPreset::AlwaysRelease: {
      const double mass[2] = {0.55, 0.45}, py[2] = {0.25, 0.30};
      const double pa_y1[2] = {0.5, 0.4}, pa_y0[2] = {0.25, 0.2};
      for (int s = 0; s < 2; ++s)
        pop.strata.push_back(stratum_from(mass[s], 0.5, [=](int a, int d0, int d1, int y) {
          if (d0 || d1) return 0.0;
          return bern(y, py[s]) * bern(a, y ? pa_y1[s] : pa_y0[s]);
        }));
      break;
    }
  }
  pop.validate();
  return pop;
}

OraclePopulation random_population(std::uint64_t seed, int n_strata, double concentration) {
  if (n_strata < 1) throw ConfigError("need at least one stratum");
  Rng rng(hash_combine(seed, 0x72616e64706f70ull));
  OraclePopulation pop;
  const std::vector<double> masses = rng.dirichlet(n_strata, 1.0);
  for (int s = 0; s < n_strata; ++s) {
    OracleStratum st;
    st.mass = masses[s];
    st.e = rng.uniform(0.2, 0.8);
    const std::vector<double> cell = rng.dirichlet(16, concentration);
    for (int c = 0; c < 16; ++c) st.joint[c] = cell[c];
    pop.strata.push_back(st);
  }
  pop.validate();
  return pop;
}

PopulationEvaluation population_evaluation(const OraclePopulation& pop) {
  pop.validate();
  const int S = int(pop.strata.size());
  DatasetSchema schema;
  std::vector<int> levels(S);
  for (int s = 0; s < S; ++s) levels[s] = s;
  schema.covariates.push_back({"x_s", levels});

  PopulationEvaluation out;
  std::vector<CaseRecord> records;
  std::vector<Marginals> marg(S);
  for (int s = 0; s < S; ++s) marg[s] = marginals(pop.strata[s]);

  for (int s = 0; s < S; ++s) {
    const Marginals& m = marg[s];
    const double e = pop.strata[s].e;
    for (int z = 0; z < 2; ++z) {
      const double wz = z ? e : 1.0 - e;
      for (int a = 0; a < 2; ++a) {
        // released rows reveal Y(0); detained rows never read y, pin it to 0
        const double cellw[3] = {m.y0d0[z][a], m.y1d0[z][a], m.d1a[z][a]};
        const int dy[3][2] = {{0, 0}, {0, 1}, {1, 0}};
        for (int k = 0; k < 3; ++k) {
          CaseRecord r;
          r.z = std::uint8_t(z);
          r.d = std::uint8_t(dy[k][0]);
          r.a = std::uint8_t(a);
          r.y = std::uint8_t(dy[k][1]);
          r.covariates = {s};
          records.push_back(std::move(r));
          out.weight.push_back(pop.strata[s].mass * wz * cellw[k]);
        }
      }
    }
  }
  out.cells = Dataset(schema, std::move(records));

  NuisanceFit fit;
  const std::size_t n = out.cells.n();
  fit.n = n;
  fit.n_folds = 1;
  fit.fold.assign(n, 0);
  fit.e1.resize(n);
  fit.m_a.resize(n);
  for (int z = 0; z < 2; ++z) {
    fit.m_d[z].resize(n);
    fit.m_y[z].resize(n);
    fit.p_a_given_z[z].resize(n);
    for (int a = 0; a < 2; ++a) {
      fit.m_d_a[z][a].resize(n);
      fit.m_y_a[z][a].resize(n);
    }
  }
  auto cond = [](double num, double den) { return den > 0 ? num / den : 0.5; };
  for (std::size_t i = 0; i < n; ++i) {
    const int s = out.cells.stratum_of(i);
    const Marginals& m = marg[s];
    fit.e1[i] = pop.strata[s].e;
    fit.m_a[i] = m.pa[1];
    for (int z = 0; z < 2; ++z) {
      fit.m_d[z][i] = m.d1[z];
      fit.m_y[z][i] = cond(m.y1dz0[z], 1.0 - m.d1[z]);
      fit.p_a_given_z[z][i] = m.pa[1];
      for (int a = 0; a < 2; ++a) {
        fit.m_d_a[z][a][i] = cond(m.d1a[z][a], m.pa[a]);
        fit.m_y_a[z][a][i] = cond(m.y1d0[z][a], m.y1d0[z][a] + m.y0d0[z][a]);
      }
    }
  }
  out.fit = std::move(fit);
  return out;
}

}  // namespace deceval
