#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "deceval/errors.hpp"

namespace deceval {

// One trial case. z: 1 = recommendation shown to the decision-maker.
// d: realized human decision (1 = positive). a: machine recommendation.
// y: realized outcome (1 = undesired event); informative only when d = 0.
struct CaseRecord {
  std::uint8_t z = 0, d = 0, a = 0, y = 0;
  std::vector<int> covariates;  // aligned with DatasetSchema::covariates
  int fta = -1, nca = -1, nvca = -1;  // -1 = column absent
};

struct CovariateSpec {
  std::string name;
  std::vector<int> levels;  // ascending, unique, nonempty
};

struct ScoreRange {
  int lo = 0, hi = 0;
};

// Conjunction of covariate equality constraints.
struct SubgroupDef {
  std::string name;
  std::vector<std::pair<std::string, int>> equals;
};

struct DatasetSchema {
  std::vector<CovariateSpec> covariates;
  std::vector<SubgroupDef> subgroups;
  ScoreRange fta_range{1, 6}, nca_range{1, 6}, nvca_range{0, 1};

  int covariate_index(const std::string& name) const;  // -1 if absent
  int n_strata() const;  // product of level-set sizes, 1 when no covariates
};

// Raw parsed CSV: header plus integer-only cells, no quoting.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_csv(std::istream& in);
RawTable read_csv_file(const std::string& path);

// Column contract: z,d,a,y required; covariates prefixed x_;
// optional score_fta, score_nca, score_nvca. Anything else rejects.
DatasetSchema infer_schema(const RawTable& table);

class Dataset {
 public:
  Dataset() = default;  // empty; usable only as an assignment target
  Dataset(DatasetSchema schema, std::vector<CaseRecord> records);

  const DatasetSchema& schema() const { return schema_; }
  const std::vector<CaseRecord>& records() const { return records_; }
  std::size_t n() const { return records_.size(); }
  int n_strata() const { return n_strata_; }
  int stratum_of(std::size_t i) const { return strata_[i]; }
  std::size_t arm_count(int z) const { return arm_count_[z]; }
  bool has_scores() const;

  // Records satisfying pred, as a new Dataset with the same schema.
  Dataset filter(const std::function<bool(const CaseRecord&)>& pred) const;

 private:
  DatasetSchema schema_;
  std::vector<CaseRecord> records_;
  std::vector<int> strata_;
  int n_strata_ = 1;
  std::size_t arm_count_[2] = {0, 0};
};

// Enforces the data contract and precomputes strata. Rows violating the
// binary/level/score invariants reject the whole table.
Dataset validate_dataset(const RawTable& table, const DatasetSchema& schema);
Dataset load_dataset(const std::string& path);  // infer_schema + validate

// Canonical column order: z,d,a,y, covariates, scores. load_dataset of the
// output reproduces the dataset exactly.
void write_csv(const Dataset& ds, std::ostream& out);

struct DatasetSummary {
  std::size_t n = 0, n_arm0 = 0, n_arm1 = 0;
  double outcome_prevalence_d0 = 0.0;  // P(y=1 | d=0), the only informative slice
  std::size_t n_d0 = 0;
};
DatasetSummary summarize(const Dataset& ds);

std::function<bool(const CaseRecord&)> subgroup_predicate(const DatasetSchema& schema,
                                                          const SubgroupDef& def);

// False-negative loss is fixed at 1. Generic mode adds true-cell weights.
struct LossSpec {
  double l01 = 1.0;
  bool generic = false;
  double l00 = 0.0, l11 = 0.0;

  static LossSpec simple(double l01);
  static LossSpec generic_loss(double l00, double l01, double l11);
};

// Proportions against the baseline potential outcome: p[y][d].
struct ConfusionMatrix {
  double p00 = 0.0, p01 = 0.0, p10 = 0.0, p11 = 0.0;
  void check() const;  // entries >= 0, sum = 1 within 1e-12
};

double classification_risk(const ConfusionMatrix& cm, const LossSpec& loss);

struct AgreementTable {
  long long count[2][2] = {{0, 0}, {0, 0}};  // [d][a]
  double prop[2][2] = {{0, 0}, {0, 0}};
  long long n = 0;
  double agreement = 0.0;  // diagonal proportion
};

AgreementTable agreement_table(const Dataset& ds, int arm);

struct AgreementDiff {
  AgreementTable arm0, arm1;
  double diff = 0.0;  // arm1 agreement - arm0 agreement
  double se = 0.0;    // difference-in-means standard error
};

AgreementDiff agreement_difference(const Dataset& ds);

}  // namespace deceval
