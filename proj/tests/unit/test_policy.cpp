#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "deceval/bounds.hpp"
#include "deceval/errors.hpp"
#include "deceval/point_estimator.hpp"
#include "deceval/policy.hpp"
#include "deceval/rng.hpp"
#include "deceval/sim_oracle.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace deceval;

namespace {

// Exhaustive minimizer over successor-closed subsets, sharing the solver's
// integer objective. Also returns the intersection of all optima, which for a
// modular objective on a closure lattice is the unique inclusion-minimal one.
struct ClosureBrute {
  std::int64_t best = 0;
  std::vector<char> minimal;
};

ClosureBrute brute_min_closure(const std::vector<std::int64_t>& q,
                               const std::vector<std::vector<int>>& succ) {
  const int n = int(q.size());
  REQUIRE(n <= 16);
  std::vector<std::uint32_t> succmask(n, 0);
  for (int c = 0; c < n; ++c)
    for (int s : succ[c]) succmask[c] |= 1u << s;
  const std::uint32_t full = (1u << n) - 1;
  std::vector<char> valid(full + 1, 0);
  std::vector<std::int64_t> sum(full + 1, 0);
  valid[0] = 1;
  for (std::uint32_t S = 1; S <= full; ++S) {
    // successors always have larger ids, so peeling the lowest id preserves
    // closedness in both directions
    const int i = std::countr_zero(S);
    const std::uint32_t rest = S & (S - 1);
    sum[S] = sum[rest] + q[i];
    valid[S] = valid[rest] && (succmask[i] & ~S) == 0;
  }
  ClosureBrute out;
  for (std::uint32_t S = 0; S <= full; ++S)
    if (valid[S]) out.best = std::min(out.best, sum[S]);
  std::uint32_t inter = full;
  for (std::uint32_t S = 0; S <= full; ++S)
    if (valid[S] && sum[S] == out.best) inter &= S;
  out.minimal.assign(n, 0);
  for (int c = 0; c < n; ++c) out.minimal[c] = (inter >> c) & 1;
  return out;
}

ScoreLattice random_small_lattice(Rng& rng) {
  const char* names[3] = {"fta", "nca", "nvca"};
  std::vector<AxisSpec> axes;
  int cells = 1;
  const int n_axes = 1 + rng.uniform_int(3);
  for (int k = 0; k < n_axes; ++k) {
    const int room = 16 / cells;
    if (room < 2) break;
    const int size = 2 + rng.uniform_int(std::min(room, 6) - 1);
    axes.push_back({names[k], 1, size});
    cells *= size;
  }
  if (axes.empty()) axes.push_back({"fta", 1, 4});
  return ScoreLattice(std::move(axes));
}

// Four single-score strata on a chain; the provision effect of stratum s at
// l01 = 1 equals flip_ai - flip_human by construction, so the optimal
// monotone selections are known in closed form.
OraclePopulation scored_chain_population() {
  auto stratum = [](int fta, double flip_human, double flip_ai) {
    OracleStratum st;
    st.mass = 0.25;
    st.e = 0.5;
    st.fta = fta;
    st.nca = 1;
    st.nvca = 0;
    for (int y = 0; y < 2; ++y)
      for (int d0 = 0; d0 < 2; ++d0)
        for (int d1 = 0; d1 < 2; ++d1) {
          double p = 0.5;
          p *= d0 == y ? 1.0 - flip_human : flip_human;
          p *= d1 == y ? 1.0 - flip_ai : flip_ai;
          st.joint[d1 * 8 + d0 * 4 + d1 * 2 + y] += p;  // A follows D(1)
        }
    return st;
  };
  OraclePopulation pop;
  pop.strata.push_back(stratum(1, 0.0, 0.40));  // provision hurts: +0.40
  pop.strata.push_back(stratum(2, 0.0, 0.08));  // mildly hurts:    +0.08
  pop.strata.push_back(stratum(3, 0.60, 0.0));  // helps a lot:     -0.60
  pop.strata.push_back(stratum(4, 0.0, 0.16));  // hurts:           +0.16
  pop.validate();
  return pop;
}

}  // namespace

TEST_CASE("the default score lattice indexes every score combination") {
  ScoreLattice lat = default_score_lattice();
  REQUIRE(lat.n_cells() == 72);
  std::size_t edges = 0;
  auto succ = lat.cover_successors();
  for (const auto& s : succ) edges += s.size();
  // 5*6*2 + 6*5*2 + 6*6*1 upward steps
  CHECK(edges == 156);
  auto pred = lat.cover_predecessors();
  std::size_t back = 0;
  for (const auto& p : pred) back += p.size();
  CHECK(back == edges);

  for (int c = 0; c < lat.n_cells(); ++c) {
    std::vector<int> sc = lat.scores(c);
    CaseRecord r;
    r.fta = sc[0];
    r.nca = sc[1];
    r.nvca = sc[2];
    CHECK(lat.cell_of(r) == c);
    CHECK(lat.leq(c, c));
  }
  // componentwise order agrees with coordinates
  CHECK(lat.leq(0, lat.n_cells() - 1));
  CHECK(!lat.leq(lat.n_cells() - 1, 0));

  CaseRecord missing;
  CHECK_THROWS_AS(lat.cell_of(missing), MissingScores);
  CaseRecord off;
  off.fta = 9;
  off.nca = 1;
  off.nvca = 0;
  CHECK_THROWS_AS(lat.cell_of(off), UnknownCell);

  CHECK_THROWS_AS(ScoreLattice(std::vector<AxisSpec>{}), ConfigError);
  CHECK_THROWS_AS(ScoreLattice(std::vector<AxisSpec>{{"age", 1, 3}}), ConfigError);
  CHECK_THROWS_AS(ScoreLattice(std::vector<AxisSpec>{{"fta", 3, 1}}), ConfigError);
}

TEST_CASE("weight quantization preserves sign and scale") {
  CHECK(quantize_weights({0.0, 0.0, 0.0}) == std::vector<std::int64_t>({0, 0, 0}));
  CHECK(quantize_weights({}).empty());
  auto q = quantize_weights({1.0, -0.5, 0.25});
  const std::int64_t unit = std::int64_t(1) << 40;
  CHECK(q == std::vector<std::int64_t>({unit, -unit / 2, unit / 4}));
  Rng rng(91);
  std::vector<double> w(20);
  for (auto& x : w) x = rng.uniform(-3.0, 3.0);
  auto qr = quantize_weights(w);
  std::int64_t maxq = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK((w[i] > 0) == (qr[i] > 0));
    CHECK((w[i] < 0) == (qr[i] < 0));
    maxq = std::max<std::int64_t>(maxq, std::llabs(qr[i]));
  }
  CHECK(maxq == unit);
}

TEST_CASE("the min-cut closure solver matches exhaustive enumeration") {
  Rng rng(92);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreLattice lat = random_small_lattice(rng);
    const int C = lat.n_cells();
    std::vector<double> w(C);
    for (auto& x : w) x = rng.uniform_int(5) == 0 ? 0.0 : rng.uniform(-1.0, 1.0);
    const auto q = quantize_weights(w);
    const auto succ = lat.cover_successors();

    const std::vector<char> got = min_cost_closure(q, succ);
    const ClosureBrute want = brute_min_closure(q, succ);

    std::int64_t got_value = 0;
    for (int c = 0; c < C; ++c)
      if (got[c]) got_value += q[c];
    CHECK(got_value == want.best);
    CHECK(got == want.minimal);
    // closedness of the returned set
    for (int c = 0; c < C; ++c)
      if (got[c])
        for (int s : succ[c]) CHECK(got[s]);
  }
}

TEST_CASE("upward and downward optima are complements in value") {
  Rng rng(93);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreLattice lat = random_small_lattice(rng);
    const int C = lat.n_cells();
    std::vector<double> w(C);
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    const auto q = quantize_weights(w);
    std::vector<std::int64_t> neg(q);
    for (auto& x : neg) x = -x;
    std::int64_t total = 0;
    for (auto x : q) total += x;

    auto value_of = [&](const std::vector<char>& sel, const std::vector<std::int64_t>& weights) {
      std::int64_t v = 0;
      for (int c = 0; c < C; ++c)
        if (sel[c]) v += weights[c];
      return v;
    };
    const std::int64_t up = value_of(min_cost_closure(q, lat.cover_successors()), q);
    const std::int64_t down = value_of(min_cost_closure(neg, lat.cover_predecessors()), neg);
    // complement of an upward-closed set is downward closed with negated gain
    CHECK(up == total + down);
  }
}

TEST_CASE("closure solver edge cases") {
  ScoreLattice chain({{"fta", 1, 3}});
  const auto succ = chain.cover_successors();

  // negative ends force the zero-weight middle along for the ride
  auto sel = min_cost_closure(quantize_weights({-5.0, 0.0, -1.0}), succ);
  CHECK(sel == std::vector<char>({1, 1, 1}));

  // all gains positive: select nothing; all negative: select everything
  CHECK(min_cost_closure(quantize_weights({2.0, 1.0, 3.0}), succ) ==
        std::vector<char>({0, 0, 0}));
  CHECK(min_cost_closure(quantize_weights({-2.0, -1.0, -3.0}), succ) ==
        std::vector<char>({1, 1, 1}));

  // zero weights are never grabbed without need (inclusion-minimality)
  CHECK(min_cost_closure({0, 0, 0}, succ) == std::vector<char>({0, 0, 0}));

  CHECK_THROWS_AS(min_cost_closure({1, 2}, succ), ConfigError);
  CHECK_THROWS_AS(min_cost_closure({1}, {{5}}), ConfigError);
}

TEST_CASE("learned provision policy recovers the planted optimum") {
  OraclePopulation pop = scored_chain_population();
  // planted cell gains at l01 = 1: +0.10, +0.02, -0.15, +0.04
  std::vector<int> helped{2, 3};
  CHECK(oracle_policy_value(pop, [](int s) { return s >= 2; }, 1.0, false) ==
        doctest::Approx(-0.11).epsilon(1e-12));

  Dataset ds = sample_dataset(pop, 20000, 94);
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});
  ScoreLattice chain({{"fta", 1, 4}});

  MonotonePolicy up =
      learn_policy(ds, fit, 1.0, PolicyKind::Provision, PolicyDirection::Increasing, chain);
  CHECK(up.selected_cells() == std::vector<int>({2, 3}));
  CHECK(up.value == doctest::Approx(-0.11).epsilon(0.15));

  MonotonePolicy down =
      learn_policy(ds, fit, 1.0, PolicyKind::Provision, PolicyDirection::Decreasing, chain);
  CHECK(down.selected_cells() == std::vector<int>({0, 1, 2}));
  CHECK(down.value == doctest::Approx(-0.03).epsilon(0.5));

  // selects() follows cell membership
  CaseRecord r;
  r.fta = 3;
  r.nca = 1;
  r.nvca = 0;
  CHECK(up.selects(r));
  r.fta = 1;
  CHECK(!up.selects(r));
}

TEST_CASE("learned policy bookkeeping is internally consistent") {
  OraclePopulation pop = preset_population(DgpPreset::FourStrata);
  Dataset ds = sample_dataset(pop, 5000, 82);
  NuisanceFit fit = fit_nuisance(ds, NuisanceConfig{});

  for (double l : {0.25, 1.0}) {
    for (PolicyKind kind : {PolicyKind::Provision, PolicyKind::Follow}) {
      for (PolicyDirection dir : {PolicyDirection::Increasing, PolicyDirection::Decreasing}) {
        MonotonePolicy p = learn_policy(ds, fit, l, kind, dir);
        REQUIRE(p.cells.size() == 72);

        double value = 0, total = 0;
        std::size_t count = 0;
        for (const auto& c : p.cells) {
          if (c.selected) value += c.weight;
          total += c.weight;
          count += c.count;
          if (c.count)
            CHECK(c.mean * double(c.count) ==
                  doctest::Approx(c.weight * double(ds.n())).epsilon(1e-10));
          else
            CHECK(c.weight == 0.0);
        }
        CHECK(count == ds.n());
        CHECK(p.value == doctest::Approx(value).epsilon(1e-12));
        // the empty policy is always feasible
        CHECK(p.value <= 1e-15);

        // cell gains add up to the unrestricted estimate of the same summand
        if (kind == PolicyKind::Provision) {
          RiskDiffEstimate est =
              estimate_risk_difference(influence_bases(ds, fit), LossSpec::simple(l));
          CHECK(total == doctest::Approx(est.beta_hat).epsilon(1e-10));
        } else {
          BoundEstimate est = estimate_ai_vs_human_bounds(ds, fit, 0, LossSpec::simple(l));
          CHECK(total == doctest::Approx(est.upper_hat).epsilon(1e-10));
        }

        // selection is monotone in the score order
        for (int c1 = 0; c1 < 72; ++c1)
          for (int c2 = 0; c2 < 72; ++c2)
            if (p.lattice.leq(c1, c2)) {
              if (dir == PolicyDirection::Increasing && p.cells[c1].selected)
                CHECK(p.cells[c2].selected);
              if (dir == PolicyDirection::Decreasing && p.cells[c2].selected)
                CHECK(p.cells[c1].selected);
            }
      }
    }
  }

  CHECK_THROWS_AS(
      learn_policy(ds, fit, 0.0, PolicyKind::Provision, PolicyDirection::Increasing),
      ConfigError);
  Dataset unscored = sample_dataset(preset_population(DgpPreset::Null), 200, 9);
  NuisanceFit ufit = fit_nuisance(unscored, NuisanceConfig{});
  CHECK_THROWS_AS(
      learn_policy(unscored, ufit, 1.0, PolicyKind::Provision, PolicyDirection::Increasing),
      MissingScores);
  ScoreLattice small({{"fta", 1, 5}});  // FourStrata reaches fta = 6
  CHECK_THROWS_AS(
      learn_policy(ds, fit, 1.0, PolicyKind::Provision, PolicyDirection::Increasing, small),
      UnknownCell);
}

TEST_CASE("policy values re-evaluate on fresh data") {
  OraclePopulation pop = scored_chain_population();
  Dataset train = sample_dataset(pop, 20000, 95);
  NuisanceFit fit = fit_nuisance(train, NuisanceConfig{});
  ScoreLattice chain({{"fta", 1, 4}});
  MonotonePolicy p =
      learn_policy(train, fit, 1.0, PolicyKind::Provision, PolicyDirection::Increasing, chain);

  // same data, same fit: the estimate reproduces the training value
  PolicyValueEstimate in_sample = evaluate_policy_value(train, fit, p);
  CHECK(in_sample.value == doctest::Approx(p.value).epsilon(1e-12));
  CHECK(in_sample.n == train.n());
  CHECK(in_sample.se() > 0.0);

  // held-out data agrees with the oracle value of the chosen selection
  Dataset test = sample_dataset(pop, 20000, 96);
  NuisanceFit test_fit = fit_nuisance(test, NuisanceConfig{});
  PolicyValueEstimate held_out = evaluate_policy_value(test, test_fit, p);
  const double truth = oracle_policy_value(pop, [](int s) { return s >= 2; }, 1.0, false);
  CHECK(std::fabs(held_out.value - truth) < 4.0 * held_out.se());

  // a policy that selects nothing is worth exactly zero
  MonotonePolicy none = p;
  for (auto& c : none.cells) c.selected = false;
  PolicyValueEstimate zero = evaluate_policy_value(train, fit, none);
  CHECK(zero.value == 0.0);
  CHECK(zero.se() == 0.0);

  // score values outside the policy's lattice are a hard error
  OraclePopulation wide = preset_population(DgpPreset::FourStrata);
  Dataset off = sample_dataset(wide, 500, 97);
  NuisanceFit off_fit = fit_nuisance(off, NuisanceConfig{});
  CHECK_THROWS_AS(evaluate_policy_value(off, off_fit, p), UnknownCell);
  Dataset unscored = sample_dataset(preset_population(DgpPreset::Null), 200, 98);
  NuisanceFit ufit = fit_nuisance(unscored, NuisanceConfig{});
  CHECK_THROWS_AS(evaluate_policy_value(unscored, ufit, p), MissingScores);
}
