#pragma once

#include <cstdint>
#include <vector>

#include "deceval/data.hpp"
#include "deceval/errors.hpp"

namespace deceval {

enum class PropensityMode { Known, Estimated };
enum class ModelKind { StratifiedFrequency, Logistic };

struct NuisanceConfig {
  PropensityMode propensity_mode = PropensityMode::Known;
  double known_propensity = 0.5;                    // P(Z=1|x), constant design
  std::vector<double> known_propensity_by_stratum;  // overrides the constant when nonempty
  ModelKind model_kind = ModelKind::StratifiedFrequency;
  double smoothing = 0.5;  // pseudo-count added to each binomial outcome
  int folds = 5;
  double clip_eta = 0.01;  // estimated-propensity mode only
  std::uint64_t seed = 0;
};

struct NuisanceDiagnostics {
  std::vector<std::size_t> cell_count;   // records per (stratum, arm), index s*2+z
  std::size_t degenerate_lookups = 0;    // out-of-fold cells with empty denominator (prediction 0.5)
  std::size_t clipped_propensity = 0;
  double p_a_arm[2] = {0.0, 0.0};        // empirical P(A=1 | Z=z), whole dataset
  bool a_imbalance = false;              // arms differ in A share beyond 3 SEs (randomization check)
};

// All predictions are materialized per record so downstream estimators are pure
// array arithmetic; tests may also build a fit by hand to pin nuisance values.
struct NuisanceFit {
  std::size_t n = 0;
  int n_folds = 0;
  std::vector<int> fold;
  std::vector<double> e1;              // P(Z=1 | x_i); clipped in estimated mode
  std::vector<double> m_d[2];          // P(D=1 | Z=z, x_i)
  std::vector<double> m_y[2];          // P(Y=1 | D=0, Z=z, x_i)
  std::vector<double> m_d_a[2][2];     // P(D=1 | Z=z, x_i, A=a)
  std::vector<double> m_y_a[2][2];     // P(Y=1 | D=0, Z=z, x_i, A=a)
  std::vector<double> m_a;             // P(A=1 | x_i), arms pooled
  std::vector<double> p_a_given_z[2];  // P(A=1 | Z=z, x_i)
  NuisanceDiagnostics diagnostics;

  // P(Z=z | x_i)
  double e_arm(std::size_t i, int z) const { return z ? e1[i] : 1.0 - e1[i]; }
};

enum class NuisanceKind { E, MD, MY, MDa, MYa, MA };

NuisanceFit fit_nuisance(const Dataset& ds, const NuisanceConfig& cfg);

// Out-of-fold probability for record i. z required except for MA; a required for
// MDa/MYa (MissingScoreContext otherwise).
double predict(const NuisanceFit& fit, NuisanceKind kind, std::size_t record_index, int z = -1,
               int a = -1);

}  // namespace deceval
