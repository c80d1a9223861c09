#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "deceval/point_estimator.hpp"
#include "deceval/rng.hpp"
#include "deceval/sim_oracle.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace deceval;

namespace {

Dataset single_stratum_sample(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "z,d,a,y\n";
  for (std::size_t i = 0; i < n; ++i) {
    int z = rng.bernoulli(0.45) ? 1 : 0;
    int a = rng.bernoulli(0.5) ? 1 : 0;
    int d = rng.bernoulli(0.25 + 0.15 * z + 0.2 * a) ? 1 : 0;
    int y = rng.bernoulli(d ? 0.5 : 0.3) ? 1 : 0;
    csv << z << ',' << d << ',' << a << ',' << y << '\n';
  }
  return dataset_from_csv(csv.str());
}

}  // namespace

TEST_CASE("mirrored arms estimate a zero difference at every loss") {
  Dataset ds = dataset_from_csv("z,d,a,y\n1,0,0,1\n1,1,0,0\n0,0,0,1\n0,1,0,0\n");
  NuisanceConfig cfg;
  cfg.smoothing = 0.0;
  cfg.folds = 2;
  NuisanceFit fit = fit_nuisance(ds, cfg);
  for (double l : {0.0, 0.5, 1.0, 2.7}) {
    auto est = estimate_risk_difference(ds, fit, LossSpec::simple(l));
    CHECK(std::fabs(est.beta_hat) < 1e-15);
    CHECK(std::isfinite(est.se()));
  }
}

TEST_CASE("off-arm influence is the model part alone") {
  Dataset ds = single_stratum_sample(40, 21);
  NuisanceFit fit = saturated_fit(ds);
  const double l = 0.8;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    int other = 1 - ds.records()[i].z;
    double expect = (1.0 - fit.m_d[other][i]) * ((1.0 + l) * fit.m_y[other][i] - l);
    CHECK(influence_human(ds, fit, i, other, LossSpec::simple(l)) ==
          doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("saturated fits collapse the estimator to arm frequencies") {
  Dataset ds = single_stratum_sample(300, 22);
  NuisanceFit fit = saturated_fit(ds);

  double py1d0[2] = {0, 0}, py0d0[2] = {0, 0}, cnt[2] = {0, 0};
  for (const auto& r : ds.records()) {
    cnt[r.z] += 1;
    if (r.d == 0) (r.y ? py1d0 : py0d0)[r.z] += 1;
  }
  for (int z = 0; z < 2; ++z) {
    py1d0[z] /= cnt[z];
    py0d0[z] /= cnt[z];
  }

  for (double l : {0.5, 1.0, 2.0}) {
    for (int z = 0; z < 2; ++z) {
      double mean = 0;
      for (std::size_t i = 0; i < ds.n(); ++i)
        mean += influence_human(ds, fit, i, z, LossSpec::simple(l));
      mean /= double(ds.n());
      CHECK(mean == doctest::Approx(py1d0[z] - l * py0d0[z]).epsilon(1e-10));
    }
    auto est = estimate_risk_difference(ds, fit, LossSpec::simple(l));
    double plug = (py1d0[1] - l * py0d0[1]) - (py1d0[0] - l * py0d0[0]);
    CHECK(est.beta_hat == doctest::Approx(plug).epsilon(1e-10));

    // inverse-weighting the compound outcome gives the same number
    double ht = 0;
    for (const auto& r : ds.records()) {
      double w = r.y * (1 - r.d) - l * (1 - r.y) * (1 - r.d);
      ht += (r.z ? w / fit.e1[0] : -w / (1 - fit.e1[0]));
    }
    ht /= double(ds.n());
    CHECK(est.beta_hat == doctest::Approx(ht).epsilon(1e-10));
  }
}

TEST_CASE("population summands integrate to the exact risk difference") {
  for (int p = 0; p < 20; ++p) {
    OraclePopulation pop = random_population(900 + std::uint64_t(p), 1 + p % 6);
    PopulationEvaluation ev = population_evaluation(pop);
    InfluenceBases bases = influence_bases(ev.cells, ev.fit);
    for (double l : {0.5, 1.0, 2.0}) {
      double acc = 0;
      for (std::size_t i = 0; i < ev.cells.n(); ++i)
        acc += ev.weight[i] *
               ((bases.a[1][i] - bases.a[0][i]) + l * (bases.b[1][i] - bases.b[0][i]));
      CHECK(std::fabs(acc - oracle_risk_difference(pop, l)) < 1e-12);
      CHECK(std::fabs(acc - oracle_identified_risk_difference(pop, l)) < 1e-12);
    }
  }
}

TEST_CASE("estimates stay within three standard errors of the truth") {
  OraclePopulation pop = preset_population(DgpPreset::FourStrata);
  const double truth = oracle_risk_difference(pop, 1.0);
  int hits = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    Dataset ds = sample_dataset(pop, 20000, 50000 + std::uint64_t(r));
    NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});
    auto est = estimate_risk_difference(ds, fit, LossSpec::simple(1.0));
    if (std::fabs(est.beta_hat - truth) <= 3.0 * est.se()) ++hits;
  }
  CHECK(hits >= 198);
}

TEST_CASE("metric differences decompose the unit-loss risk difference") {
  OraclePopulation pop = preset_population(DgpPreset::FourStrata);
  Dataset ds = sample_dataset(pop, 5000, 23);
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});

  auto mis = estimate_metric_difference(ds, fit, MetricKind::MisclassDiff);
  auto rd = estimate_risk_difference(ds, fit, LossSpec::simple(1.0));
  CHECK(mis.diff.beta_hat == rd.beta_hat);
  CHECK(mis.diff.variance_hat == rd.variance_hat);

  auto fnp = estimate_metric_difference(ds, fit, MetricKind::FnpDiff);
  auto fpp = estimate_metric_difference(ds, fit, MetricKind::FppDiff);
  CHECK(fnp.diff.beta_hat + fpp.diff.beta_hat == doctest::Approx(mis.diff.beta_hat).epsilon(1e-10));

  // per-arm false-negative proportions are identified and near the oracle
  ConfusionMatrix c0 = oracle_confusion(pop, SystemKind::Human);
  ConfusionMatrix c1 = oracle_confusion(pop, SystemKind::HumanAi);
  CHECK(std::fabs(fnp.fnp_arm[0] - c0.p10) < 0.03);
  CHECK(std::fabs(fnp.fnp_arm[1] - c1.p10) < 0.03);
  CHECK(fnp.fnp_arm_variance[0] > 0.0);
}

TEST_CASE("generic loss weights extend the simple path") {
  Dataset ds = single_stratum_sample(400, 24);
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});

  for (double l : {0.5, 1.0, 3.0}) {
    auto simple = estimate_risk_difference(ds, fit, LossSpec::simple(l));
    auto gen = estimate_generic_loss_difference(ds, fit, 0.0, l, 0.0);
    CHECK(gen.beta_hat == simple.beta_hat);
    CHECK(gen.variance_hat == simple.variance_hat);
  }

  // equal true/false costs make the loss decision-free: identically zero
  auto flat = estimate_generic_loss_difference(ds, fit, 0.7, 0.7, 1.0);
  CHECK(flat.beta_hat == 0.0);
  CHECK(flat.variance_hat == 0.0);

  CHECK_THROWS_AS(estimate_generic_loss_difference(ds, fit, -0.1, 1.0, 0.0), ConfigError);
}

TEST_CASE("generic losses track the oracle on synthetic data") {
  OraclePopulation pop = preset_population(DgpPreset::FourStrata);
  Dataset ds = sample_dataset(pop, 40000, 25);
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});
  const double l00 = 0.2, l01 = 1.5, l11 = 0.4;
  auto est = estimate_generic_loss_difference(ds, fit, l00, l01, l11);
  ConfusionMatrix c0 = oracle_confusion(pop, SystemKind::Human);
  ConfusionMatrix c1 = oracle_confusion(pop, SystemKind::HumanAi);
  auto risk = [&](const ConfusionMatrix& c) {
    return c.p10 + l01 * c.p01 + l00 * c.p00 + l11 * c.p11;
  };
  CHECK(std::fabs(est.beta_hat - (risk(c1) - risk(c0))) < 3.5 * est.se());
}

TEST_CASE("subgroups restrict, partition, and reject emptiness") {
  OraclePopulation pop = preset_population(DgpPreset::FourStrata);
  Dataset ds = sample_dataset(pop, 6000, 26);
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});
  LossSpec loss = LossSpec::simple(1.0);

  SubgroupOptions reuse;
  reuse.refit = false;

  // the always-true subgroup is the whole sample
  auto whole = subgroup_risk_difference(ds, fit, [](const CaseRecord&) { return true; }, loss, reuse);
  auto overall = estimate_risk_difference(ds, fit, loss);
  CHECK(whole.beta_hat == overall.beta_hat);

  // a disjoint exhaustive partition averages back to the overall estimate
  int sidx = ds.schema().covariate_index("x_s");
  REQUIRE(sidx >= 0);
  double acc = 0;
  for (int lev = 0; lev < 4; ++lev) {
    auto part = subgroup_risk_difference(
        ds, fit, [&](const CaseRecord& r) { return r.covariates[std::size_t(sidx)] == lev; }, loss,
        reuse);
    acc += double(part.n) / double(ds.n()) * part.beta_hat;
  }
  CHECK(acc == doctest::Approx(overall.beta_hat).epsilon(1e-10));

  CHECK_THROWS_AS(
      subgroup_risk_difference(ds, fit, [](const CaseRecord&) { return false; }, loss, reuse),
      EmptySubgroup);

  // refit mode runs its own cross-fit inside the subgroup
  SubgroupOptions refit;
  auto sub = subgroup_risk_difference(
      ds, fit, [&](const CaseRecord& r) { return r.covariates[std::size_t(sidx)] <= 1; }, loss,
      refit);
  CHECK(std::isfinite(sub.beta_hat));
  CHECK(sub.n < ds.n());
}

TEST_CASE("estimates and variances reconstruct from loss bases") {
  Dataset ds = single_stratum_sample(500, 27);
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});
  InfluenceBases bases = influence_bases(ds, fit);

  auto at = [&](double l) { return estimate_risk_difference(ds, fit, LossSpec::simple(l)); };
  auto e0 = at(0.0), e1 = at(1.0), e2 = at(2.0);

  Rng rng(28);
  for (int k = 0; k < 25; ++k) {
    double l = rng.uniform(0.01, 8.0);
    auto direct = at(l);
    // affine point estimate
    double lin = e0.beta_hat + l * (e1.beta_hat - e0.beta_hat);
    CHECK(direct.beta_hat == doctest::Approx(lin).epsilon(1e-10));
    // quadratic variance from three evaluations
    double c = e0.variance_hat;
    double aq = (e2.variance_hat - 2 * e1.variance_hat + e0.variance_hat) / 2.0;
    double bq = e1.variance_hat - c - aq;
    CHECK(direct.variance_hat == doctest::Approx(aq * l * l + bq * l + c).epsilon(1e-8));
    // cached bases agree with the fresh pass
    auto cached = estimate_risk_difference(bases, LossSpec::simple(l));
    CHECK(cached.beta_hat == direct.beta_hat);
    CHECK(cached.variance_hat == direct.variance_hat);
  }
}

TEST_CASE("misspecifying one side leaves the estimator consistent") {
  OraclePopulation pop = preset_population(DgpPreset::FourStrata);
  const double truth = oracle_risk_difference(pop, 1.0);
  Dataset ds = sample_dataset(pop, 50000, 29);

  // correct known propensity, garbage outcome and decision models
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});
  for (int z = 0; z < 2; ++z) {
    std::fill(fit.m_d[z].begin(), fit.m_d[z].end(), 0.37);
    std::fill(fit.m_y[z].begin(), fit.m_y[z].end(), 0.71);
  }
  auto est = estimate_risk_difference(ds, fit, LossSpec::simple(1.0));
  CHECK(std::fabs(est.beta_hat - truth) < 0.02);

  // correct models, wrong propensity
  NuisanceFit fit2 = fit_nuisance(ds, NuisanceConfig{});
  std::fill(fit2.e1.begin(), fit2.e1.end(), 0.3);  // truth is 0.5
  auto est2 = estimate_risk_difference(ds, fit2, LossSpec::simple(1.0));
  CHECK(std::fabs(est2.beta_hat - truth) < 0.02);
}

TEST_CASE("confidence interval width shrinks like root n") {
  OraclePopulation pop = preset_population(DgpPreset::FourStrata);
  double widths[3];
  std::size_t sizes[3] = {2000, 8000, 32000};
  for (int k = 0; k < 3; ++k) {
    Dataset ds = sample_dataset(pop, sizes[k], 30);
    NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});
    auto est = estimate_risk_difference(ds, fit, LossSpec::simple(1.0));
    Interval ci = est.ci(0.05);
    widths[k] = ci.hi - ci.lo;
    CHECK(ci.lo < ci.hi);
  }
  CHECK(std::fabs(widths[0] / widths[1] - 2.0) < 0.3);
  CHECK(std::fabs(widths[1] / widths[2] - 2.0) < 0.3);
}
