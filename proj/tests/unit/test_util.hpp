#pragma once

#include <sstream>
#include <string>

#include "deceval/data.hpp"
#include "deceval/nuisance.hpp"

// Builds a validated dataset from inline CSV text; keeps fixtures next to the
// assertions that use them.
inline deceval::Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  deceval::RawTable t = deceval::read_csv(in);
  return deceval::validate_dataset(t, deceval::infer_schema(t));
}

// Saturated single-stratum fit from whole-sample frequencies, with the
// empirical arm share as propensity. Under it the doubly-robust estimators
// collapse to plug-in frequencies exactly.
inline deceval::NuisanceFit saturated_fit(const deceval::Dataset& ds) {
  deceval::NuisanceFit fit;
  fit.n = ds.n();
  fit.n_folds = 1;
  fit.fold.assign(fit.n, 0);
  double n1 = double(ds.arm_count(1));
  double cnt[2] = {0, 0}, d1[2] = {0, 0}, d0[2] = {0, 0}, y1[2] = {0, 0}, a1sum = 0;
  double cnt_a[2][2] = {}, d1_a[2][2] = {}, d0_a[2][2] = {}, y1_a[2][2] = {}, a1z[2] = {0, 0};
  for (const auto& r : ds.records()) {
    cnt[r.z] += 1;
    d1[r.z] += r.d;
    a1sum += r.a;
    a1z[r.z] += r.a;
    cnt_a[r.z][r.a] += 1;
    d1_a[r.z][r.a] += r.d;
    if (r.d == 0) {
      d0[r.z] += 1;
      y1[r.z] += r.y;
      d0_a[r.z][r.a] += 1;
      y1_a[r.z][r.a] += r.y;
    }
  }
  auto frac = [](double num, double den) { return den > 0 ? num / den : 0.5; };
  fit.e1.assign(fit.n, n1 / double(ds.n()));
  fit.m_a.assign(fit.n, a1sum / double(ds.n()));
  for (int z = 0; z < 2; ++z) {
    fit.m_d[z].assign(fit.n, frac(d1[z], cnt[z]));
    fit.m_y[z].assign(fit.n, frac(y1[z], d0[z]));
    fit.p_a_given_z[z].assign(fit.n, frac(a1z[z], cnt[z]));
    for (int a = 0; a < 2; ++a) {
      fit.m_d_a[z][a].assign(fit.n, frac(d1_a[z][a], cnt_a[z][a]));
      fit.m_y_a[z][a].assign(fit.n, frac(y1_a[z][a], d0_a[z][a]));
    }
  }
  return fit;
}

#ifndef DECEVAL_DATA_DIR
#define DECEVAL_DATA_DIR "data"
#endif

inline std::string fixture_path(const std::string& name) {
  return std::string(DECEVAL_DATA_DIR) + "/" + name;
}
