#include "deceval/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "deceval/rng.hpp"

namespace deceval {

namespace {

// Fold key depends on record content only, never on position: permuting the
// dataset leaves the fold multiset of every content class, and with it every
// count and estimate, unchanged.
std::uint64_t record_key(const CaseRecord& r, std::uint64_t seed) {
  std::uint64_t h = hash_combine(0x6465636576616cull, seed);
  h = hash_combine(h, (std::uint64_t(r.z) << 3) | (std::uint64_t(r.d) << 2) |
                          (std::uint64_t(r.a) << 1) | std::uint64_t(r.y));
  for (int v : r.covariates) h = hash_combine(h, std::uint64_t(std::int64_t(v)));
  h = hash_combine(h, std::uint64_t(std::int64_t(r.fta)));
  h = hash_combine(h, std::uint64_t(std::int64_t(r.nca)));
  h = hash_combine(h, std::uint64_t(std::int64_t(r.nvca)));
  return h;
}

// Binomial counts for every cell the stratified estimator can be asked about.
struct CellCounts {
  int n_strata = 0;
  // per (stratum, z): all records / D=1 / D=0 / Y=1 among D=0 / A=1
  std::vector<double> cnt, d1, d0, y1, a1;
  // per (stratum, z, a): records / D=1 / D=0 / Y=1 among D=0
  std::vector<double> cnt_a, d1_a, d0_a, y1_a;
  // per stratum: records / A=1 / Z=1
  std::vector<double> cnt_s, a1_s, z1_s;

  explicit CellCounts(int s) : n_strata(s) {
    cnt.assign(s * 2, 0);
    d1.assign(s * 2, 0);
    d0.assign(s * 2, 0);
    y1.assign(s * 2, 0);
    a1.assign(s * 2, 0);
    cnt_a.assign(s * 4, 0);
    d1_a.assign(s * 4, 0);
    d0_a.assign(s * 4, 0);
    y1_a.assign(s * 4, 0);
    cnt_s.assign(s, 0);
    a1_s.assign(s, 0);
    z1_s.assign(s, 0);
  }

  void add(const CaseRecord& r, int s) {
    const int zi = s * 2 + r.z;
    const int zai = s * 4 + r.z * 2 + r.a;
    cnt[zi] += 1;
    a1[zi] += r.a;
    cnt_a[zai] += 1;
    cnt_s[s] += 1;
    a1_s[s] += r.a;
    z1_s[s] += r.z;
    if (r.d) {
      d1[zi] += 1;
      d1_a[zai] += 1;
    } else {
      d0[zi] += 1;
      d0_a[zai] += 1;
      y1[zi] += r.y;
      y1_a[zai] += r.y;
    }
  }
};

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Main-effects design: intercept plus one dummy per non-reference level.
struct LogisticDesign {
  int dim = 1;
  std::vector<int> offset;  // column offset of covariate c's dummy block

  explicit LogisticDesign(const DatasetSchema& schema) {
    for (const auto& c : schema.covariates) {
      offset.push_back(dim);
      dim += int(c.levels.size()) - 1;
    }
  }

  void fill_row(const DatasetSchema& schema, const CaseRecord& r, std::vector<double>& x) const {
    std::fill(x.begin(), x.end(), 0.0);
    x[0] = 1.0;
    for (std::size_t c = 0; c < schema.covariates.size(); ++c) {
      const auto& levels = schema.covariates[c].levels;
      auto it = std::lower_bound(levels.begin(), levels.end(), r.covariates[c]);
      int li = int(it - levels.begin());
      if (li > 0) x[offset[c] + li - 1] = 1.0;
    }
  }
};

// Ridge-penalized logistic fit by damped Newton; strict concavity from the
// ridge makes the optimum finite even under separation.
struct LogisticModel {
  std::vector<double> beta;
  bool degenerate = false;

  static constexpr double kRidge = 1e-6;
  static constexpr double kGradTol = 1e-8;
  static constexpr int kMaxIter = 500;

  void fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys) {
    if (xs.empty()) {
      degenerate = true;
      return;
    }
    const int p = int(xs[0].size());
    beta.assign(p, 0.0);
    std::vector<double> grad(p), delta(p), trial(p);
    std::vector<double> hess(p * p);
    auto objective = [&](const std::vector<double>& b) {
      double obj = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        double t = 0;
        for (int j = 0; j < p; ++j) t += b[j] * xs[i][j];
        // log-likelihood contribution, numerically stable form
        obj += ys[i] * t - (t > 30 ? t : std::log1p(std::exp(t)));
      }
      for (int j = 0; j < p; ++j) obj -= 0.5 * kRidge * b[j] * b[j];
      return obj;
    };
    double obj = objective(beta);
    for (int iter = 0; iter < kMaxIter; ++iter) {
      std::fill(grad.begin(), grad.end(), 0.0);
      std::fill(hess.begin(), hess.end(), 0.0);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        double t = 0;
        for (int j = 0; j < p; ++j) t += beta[j] * xs[i][j];
        const double mu = sigmoid(t);
        const double w = std::max(mu * (1.0 - mu), 1e-12);
        const double res = ys[i] - mu;
        for (int j = 0; j < p; ++j) {
          grad[j] += res * xs[i][j];
          for (int k = 0; k <= j; ++k) hess[j * p + k] += w * xs[i][j] * xs[i][k];
        }
      }
      double gmax = 0;
      for (int j = 0; j < p; ++j) {
        grad[j] -= kRidge * beta[j];
        hess[j * p + j] += kRidge;
        gmax = std::max(gmax, std::fabs(grad[j]));
      }
      if (gmax <= kGradTol * double(std::max<std::size_t>(1, xs.size()))) return;
      // Cholesky solve of hess * delta = grad (lower triangle filled)
      for (int j = 0; j < p; ++j)
        for (int k = j + 1; k < p; ++k) hess[j * p + k] = hess[k * p + j];
      std::vector<double> chol(hess);
      for (int j = 0; j < p; ++j) {
        for (int k = 0; k < j; ++k) {
          double s = chol[j * p + k];
          for (int m = 0; m < k; ++m) s -= chol[j * p + m] * chol[k * p + m];
          chol[j * p + k] = s / chol[k * p + k];
        }
        double s = chol[j * p + j];
        for (int m = 0; m < j; ++m) s -= chol[j * p + m] * chol[j * p + m];
        if (s <= 0) throw NonConvergence("logistic Hessian not positive definite");
        chol[j * p + j] = std::sqrt(s);
      }
      for (int j = 0; j < p; ++j) {
        double s = grad[j];
        for (int m = 0; m < j; ++m) s -= chol[j * p + m] * delta[m];
        delta[j] = s / chol[j * p + j];
      }
      for (int j = p - 1; j >= 0; --j) {
        double s = delta[j];
        for (int m = j + 1; m < p; ++m) s -= chol[m * p + j] * delta[m];
        delta[j] = s / chol[j * p + j];
      }
      double step = 1.0;
      bool improved = false;
      for (int h = 0; h < 40; ++h, step *= 0.5) {
        for (int j = 0; j < p; ++j) trial[j] = beta[j] + step * delta[j];
        const double cand = objective(trial);
        if (cand > obj) {
          beta = trial;
          obj = cand;
          improved = true;
          break;
        }
      }
      // No representable step improves a strictly concave objective: we are at
      // the optimum to double resolution.
      if (!improved) return;
    }
    throw NonConvergence("logistic Newton iterations exhausted");
  }

  double predict(const std::vector<double>& x) const {
    if (degenerate) return 0.5;
    double t = 0;
    for (std::size_t j = 0; j < x.size(); ++j) t += beta[j] * x[j];
    return sigmoid(t);
  }
};

void validate_config(const Dataset& ds, const NuisanceConfig& cfg) {
  if (cfg.folds < 2) throw ConfigError("folds must be at least 2");
  if (std::size_t(cfg.folds) > ds.n()) throw ConfigError("folds exceed record count");
  if (!(cfg.smoothing >= 0.0)) throw ConfigError("smoothing must be nonnegative");
  if (!(cfg.clip_eta > 0.0 && cfg.clip_eta < 0.5)) throw ConfigError("clip_eta must be in (0, 0.5)");
  if (cfg.propensity_mode == PropensityMode::Known) {
    if (cfg.known_propensity_by_stratum.empty()) {
      if (!(cfg.known_propensity > 0.0 && cfg.known_propensity < 1.0))
        throw ConfigError("known propensity must be in (0, 1)");
    } else {
      if (int(cfg.known_propensity_by_stratum.size()) != ds.n_strata())
        throw ConfigError("per-stratum propensity table size mismatch");
      for (double e : cfg.known_propensity_by_stratum)
        if (!(e > 0.0 && e < 1.0)) throw ConfigError("known propensity must be in (0, 1)");
    }
  }
}

}  // namespace

NuisanceFit fit_nuisance(const Dataset& ds, const NuisanceConfig& cfg) {
  validate_config(ds, cfg);
  const std::size_t n = ds.n();
  const int S = ds.n_strata();
  const int K = cfg.folds;

  NuisanceFit fit;
  fit.n = n;
  fit.n_folds = K;
  fit.fold.resize(n);
  // Duplicates are disambiguated by occurrence rank so they spread across
  // folds; the k-th copy of a given content lands in the same fold under any
  // record order.
  std::unordered_map<std::uint64_t, std::uint32_t> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t key = record_key(ds.records()[i], cfg.seed);
    fit.fold[i] = int(hash_combine(key, seen[key]++) % std::uint64_t(K));
  }

  CellCounts global(S);
  std::vector<CellCounts> per_fold(K, CellCounts(S));
  for (std::size_t i = 0; i < n; ++i) {
    global.add(ds.records()[i], ds.stratum_of(i));
    per_fold[fit.fold[i]].add(ds.records()[i], ds.stratum_of(i));
  }

  fit.diagnostics.cell_count.resize(S * 2);
  for (int c = 0; c < S * 2; ++c) fit.diagnostics.cell_count[c] = std::size_t(global.cnt[c]);

  if (cfg.smoothing == 0.0 && cfg.model_kind == ModelKind::StratifiedFrequency) {
    for (int s = 0; s < S; ++s) {
      if (global.cnt_s[s] == 0) continue;  // stratum unobserved, never queried
      for (int z = 0; z < 2; ++z)
        if (global.cnt[s * 2 + z] == 0 || global.d0[s * 2 + z] == 0)
          throw EmptyCell("stratum " + std::to_string(s) + ", arm " + std::to_string(z) +
                          " has no usable records and smoothing is 0");
    }
  }

  for (int z = 0; z < 2; ++z) {
    fit.m_d[z].resize(n);
    fit.m_y[z].resize(n);
    fit.p_a_given_z[z].resize(n);
    for (int a = 0; a < 2; ++a) {
      fit.m_d_a[z][a].resize(n);
      fit.m_y_a[z][a].resize(n);
    }
  }
  fit.m_a.resize(n);
  fit.e1.resize(n);

  auto& diag = fit.diagnostics;
  const double s0 = cfg.smoothing;
  auto prob = [&diag, s0](double count, double total) {
    if (total == 0) {
      ++diag.degenerate_lookups;
      return 0.5;
    }
    return (count + s0) / (total + 2.0 * s0);
  };

  if (cfg.model_kind == ModelKind::StratifiedFrequency) {
    for (std::size_t i = 0; i < n; ++i) {
      const int f = fit.fold[i];
      const int s = ds.stratum_of(i);
      const CellCounts& own = per_fold[f];
      auto oof = [&](const std::vector<double>& g, const std::vector<double>& o, int idx) {
        return g[idx] - o[idx];
      };
      for (int z = 0; z < 2; ++z) {
        const int zi = s * 2 + z;
        fit.m_d[z][i] = prob(oof(global.d1, own.d1, zi), oof(global.cnt, own.cnt, zi));
        fit.m_y[z][i] = prob(oof(global.y1, own.y1, zi), oof(global.d0, own.d0, zi));
        fit.p_a_given_z[z][i] = prob(oof(global.a1, own.a1, zi), oof(global.cnt, own.cnt, zi));
        for (int a = 0; a < 2; ++a) {
          const int zai = s * 4 + z * 2 + a;
          fit.m_d_a[z][a][i] =
              prob(oof(global.d1_a, own.d1_a, zai), oof(global.cnt_a, own.cnt_a, zai));
          fit.m_y_a[z][a][i] =
              prob(oof(global.y1_a, own.y1_a, zai), oof(global.d0_a, own.d0_a, zai));
        }
      }
      fit.m_a[i] = prob(oof(global.a1_s, own.a1_s, s), oof(global.cnt_s, own.cnt_s, s));
      if (cfg.propensity_mode == PropensityMode::Estimated)
        fit.e1[i] = prob(oof(global.z1_s, own.z1_s, s), oof(global.cnt_s, own.cnt_s, s));
    }
  } else {
    const DatasetSchema& schema = ds.schema();
    LogisticDesign design(schema);
    std::vector<std::vector<double>> rows(n, std::vector<double>(design.dim));
    for (std::size_t i = 0; i < n; ++i) design.fill_row(schema, ds.records()[i], rows[i]);

    // One model per (fold, target); predictions for fold f come from the fit
    // that excluded fold f.
    auto fit_target = [&](int f, auto include, auto response) {
      LogisticModel m;
      std::vector<std::vector<double>> xs;
      std::vector<double> ys;
      for (std::size_t i = 0; i < n; ++i) {
        if (fit.fold[i] == f) continue;
        const CaseRecord& r = ds.records()[i];
        if (!include(r)) continue;
        xs.push_back(rows[i]);
        ys.push_back(double(response(r)));
      }
      m.fit(xs, ys);
      return m;
    };
    for (int f = 0; f < K; ++f) {
      LogisticModel md[2], my[2], paz[2], mda[2][2], mya[2][2];
      for (int z = 0; z < 2; ++z) {
        md[z] = fit_target(f, [z](const CaseRecord& r) { return r.z == z; },
                           [](const CaseRecord& r) { return r.d; });
        my[z] = fit_target(f, [z](const CaseRecord& r) { return r.z == z && r.d == 0; },
                           [](const CaseRecord& r) { return r.y; });
        paz[z] = fit_target(f, [z](const CaseRecord& r) { return r.z == z; },
                            [](const CaseRecord& r) { return r.a; });
        for (int a = 0; a < 2; ++a) {
          mda[z][a] = fit_target(f, [z, a](const CaseRecord& r) { return r.z == z && r.a == a; },
                                 [](const CaseRecord& r) { return r.d; });
          mya[z][a] =
              fit_target(f, [z, a](const CaseRecord& r) { return r.z == z && r.a == a && r.d == 0; },
                         [](const CaseRecord& r) { return r.y; });
        }
      }
      LogisticModel ma = fit_target(f, [](const CaseRecord&) { return true; },
                                    [](const CaseRecord& r) { return r.a; });
      LogisticModel ez;
      if (cfg.propensity_mode == PropensityMode::Estimated)
        ez = fit_target(f, [](const CaseRecord&) { return true; },
                        [](const CaseRecord& r) { return r.z; });
      for (std::size_t i = 0; i < n; ++i) {
        if (fit.fold[i] != f) continue;
        for (int z = 0; z < 2; ++z) {
          fit.m_d[z][i] = md[z].predict(rows[i]);
          fit.m_y[z][i] = my[z].predict(rows[i]);
          fit.p_a_given_z[z][i] = paz[z].predict(rows[i]);
          for (int a = 0; a < 2; ++a) {
            fit.m_d_a[z][a][i] = mda[z][a].predict(rows[i]);
            fit.m_y_a[z][a][i] = mya[z][a].predict(rows[i]);
          }
        }
        fit.m_a[i] = ma.predict(rows[i]);
        if (cfg.propensity_mode == PropensityMode::Estimated) fit.e1[i] = ez.predict(rows[i]);
      }
    }
  }

  if (cfg.propensity_mode == PropensityMode::Known) {
    for (std::size_t i = 0; i < n; ++i)
      fit.e1[i] = cfg.known_propensity_by_stratum.empty()
                      ? cfg.known_propensity
                      : cfg.known_propensity_by_stratum[ds.stratum_of(i)];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double lo = cfg.clip_eta, hi = 1.0 - cfg.clip_eta;
      if (fit.e1[i] < lo || fit.e1[i] > hi) {
        fit.e1[i] = std::clamp(fit.e1[i], lo, hi);
        ++diag.clipped_propensity;
      }
    }
  }

  // A is pre-treatment, so its share should match across arms up to sampling noise.
  double na[2] = {0, 0}, a1[2] = {0, 0};
  for (const auto& r : ds.records()) {
    na[r.z] += 1;
    a1[r.z] += r.a;
  }
  for (int z = 0; z < 2; ++z) diag.p_a_arm[z] = na[z] > 0 ? a1[z] / na[z] : 0.0;
  if (na[0] > 0 && na[1] > 0) {
    const double pooled = (a1[0] + a1[1]) / (na[0] + na[1]);
    const double se = std::sqrt(std::max(pooled * (1 - pooled), 1e-12) * (1 / na[0] + 1 / na[1]));
    diag.a_imbalance = std::fabs(diag.p_a_arm[1] - diag.p_a_arm[0]) > 3.0 * se;
  }
  return fit;
}

double predict(const NuisanceFit& fit, NuisanceKind kind, std::size_t record_index, int z, int a) {
  if (record_index >= fit.n) throw ConfigError("record index out of range");
  const std::size_t i = record_index;
  const bool needs_z = kind != NuisanceKind::MA;
  if (needs_z && (z != 0 && z != 1)) throw ConfigError("prediction kind requires z in {0,1}");
  switch (kind) {
    case NuisanceKind::E:
      return fit.e_arm(i, z);
    case NuisanceKind::MD:
      return fit.m_d[z][i];
    case NuisanceKind::MY:
      return fit.m_y[z][i];
    case NuisanceKind::MDa:
      if (a != 0 && a != 1) throw MissingScoreContext("mDa prediction requires a in {0,1}");
      if (fit.m_d_a[z][a].empty()) throw MissingAConditionalFit("fit has no A-conditional decision model");
      return fit.m_d_a[z][a][i];
    case NuisanceKind::MYa:
      if (a != 0 && a != 1) throw MissingScoreContext("mYa prediction requires a in {0,1}");
      if (fit.m_y_a[z][a].empty()) throw MissingAConditionalFit("fit has no A-conditional outcome model");
      return fit.m_y_a[z][a][i];
    case NuisanceKind::MA:
      return fit.m_a[i];
  }
  throw ConfigError("unknown prediction kind");
}

}  // namespace deceval
