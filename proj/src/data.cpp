#include "deceval/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace deceval {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    long v = std::stol(s, &pos);
    if (pos != s.size()) return false;
    out = int(v);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

constexpr const char* kScoreCols[3] = {"score_fta", "score_nca", "score_nvca"};

}  // namespace

RawTable read_csv(std::istream& in) {
  RawTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split_line(line);
      first = false;
    } else {
      t.rows.push_back(split_line(line));
    }
  }
  if (first) throw DataError("empty table: no header");
  return t;
}

RawTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_csv(in);
}

int DatasetSchema::covariate_index(const std::string& name) const {
  for (std::size_t i = 0; i < covariates.size(); ++i)
    if (covariates[i].name == name) return int(i);
  return -1;
}

int DatasetSchema::n_strata() const {
  int n = 1;
  for (const auto& c : covariates) n *= int(c.levels.size());
  return n;
}

DatasetSchema infer_schema(const RawTable& table) {
  DatasetSchema schema;
  for (std::size_t ci = 0; ci < table.header.size(); ++ci) {
    const std::string& col = table.header[ci];
    if (col == "z" || col == "d" || col == "a" || col == "y") continue;
    if (col == kScoreCols[0] || col == kScoreCols[1] || col == kScoreCols[2]) continue;
    if (col.rfind("x_", 0) == 0) {
      std::set<int> levels;
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (ci >= table.rows[r].size())
          throw DataError("row " + std::to_string(r + 1) + " is short");
        int v;
        if (!parse_int(table.rows[r][ci], v)) throw NonBinaryValue(r + 1, col);
        levels.insert(v);
      }
      if (levels.empty()) levels.insert(0);  // declared covariate, empty table
      schema.covariates.push_back({col, {levels.begin(), levels.end()}});
      continue;
    }
    throw ConfigError("unknown column: " + col);
  }
  return schema;
}

Dataset::Dataset(DatasetSchema schema, std::vector<CaseRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  n_strata_ = schema_.n_strata();
  strata_.resize(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const CaseRecord& r = records_[i];
    if (r.covariates.size() != schema_.covariates.size())
      throw DataError("record covariate count does not match schema");
    int id = 0;
    for (std::size_t c = 0; c < schema_.covariates.size(); ++c) {
      const auto& levels = schema_.covariates[c].levels;
      auto it = std::lower_bound(levels.begin(), levels.end(), r.covariates[c]);
      if (it == levels.end() || *it != r.covariates[c]) throw UnknownLevel(i + 1, schema_.covariates[c].name);
      id = id * int(levels.size()) + int(it - levels.begin());
    }
    strata_[i] = id;
    ++arm_count_[r.z];
  }
}

bool Dataset::has_scores() const {
  if (records_.empty()) return false;
  return records_[0].fta >= 0 && records_[0].nca >= 0 && records_[0].nvca >= 0;
}

Dataset Dataset::filter(const std::function<bool(const CaseRecord&)>& pred) const {
  std::vector<CaseRecord> kept;
  for (const auto& r : records_)
    if (pred(r)) kept.push_back(r);
  return Dataset(schema_, std::move(kept));
}

Dataset validate_dataset(const RawTable& table, const DatasetSchema& schema) {
  auto col_of = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < table.header.size(); ++i)
      if (table.header[i] == name) return int(i);
    return -1;
  };

  const char* required[4] = {"z", "d", "a", "y"};
  int req_idx[4];
  for (int k = 0; k < 4; ++k) {
    req_idx[k] = col_of(required[k]);
    if (req_idx[k] < 0) throw MissingColumn(required[k]);
  }
  std::vector<int> cov_idx;
  for (const auto& c : schema.covariates) {
    int idx = col_of(c.name);
    if (idx < 0) throw MissingColumn(c.name);
    cov_idx.push_back(idx);
  }
  int score_idx[3];
  for (int k = 0; k < 3; ++k) score_idx[k] = col_of(kScoreCols[k]);
  const ScoreRange ranges[3] = {schema.fta_range, schema.nca_range, schema.nvca_range};

  for (std::size_t ci = 0; ci < table.header.size(); ++ci) {
    const std::string& col = table.header[ci];
    bool known = false;
    for (int k = 0; k < 4; ++k) known |= (col == required[k]);
    for (int k = 0; k < 3; ++k) known |= (col == kScoreCols[k]);
    known |= (schema.covariate_index(col) >= 0);
    if (!known) throw ConfigError("unknown column: " + col);
  }

  std::vector<CaseRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size())
      throw DataError("row " + std::to_string(r + 1) + " has wrong cell count");
    CaseRecord rec;
    std::uint8_t* fields[4] = {&rec.z, &rec.d, &rec.a, &rec.y};
    for (int k = 0; k < 4; ++k) {
      int v;
      if (!parse_int(row[req_idx[k]], v) || (v != 0 && v != 1))
        throw NonBinaryValue(r + 1, required[k]);
      *fields[k] = std::uint8_t(v);
    }
    for (std::size_t c = 0; c < cov_idx.size(); ++c) {
      int v;
      if (!parse_int(row[cov_idx[c]], v)) throw NonBinaryValue(r + 1, schema.covariates[c].name);
      rec.covariates.push_back(v);
    }
    int* score_fields[3] = {&rec.fta, &rec.nca, &rec.nvca};
    for (int k = 0; k < 3; ++k) {
      if (score_idx[k] < 0) continue;
      int v;
      if (!parse_int(row[score_idx[k]], v)) throw ScoreOutOfRange(r + 1, kScoreCols[k]);
      if (v < ranges[k].lo || v > ranges[k].hi) throw ScoreOutOfRange(r + 1, kScoreCols[k]);
      *score_fields[k] = v;
    }
    records.push_back(std::move(rec));
  }

  Dataset ds(schema, std::move(records));
  for (int z = 0; z < 2; ++z)
    if (ds.arm_count(z) == 0) throw EmptyArm(z);
  return ds;
}

Dataset load_dataset(const std::string& path) {
  RawTable t = read_csv_file(path);
  return validate_dataset(t, infer_schema(t));
}

void write_csv(const Dataset& ds, std::ostream& out) {
  out << "z,d,a,y";
  for (const auto& c : ds.schema().covariates) out << ',' << c.name;
  const bool scores = ds.has_scores();
  if (scores) out << ",score_fta,score_nca,score_nvca";
  out << '\n';
  for (const auto& r : ds.records()) {
    out << int(r.z) << ',' << int(r.d) << ',' << int(r.a) << ',' << int(r.y);
    for (int v : r.covariates) out << ',' << v;
    if (scores) out << ',' << r.fta << ',' << r.nca << ',' << r.nvca;
    out << '\n';
  }
}

DatasetSummary summarize(const Dataset& ds) {
  DatasetSummary s;
  s.n = ds.n();
  s.n_arm0 = ds.arm_count(0);
  s.n_arm1 = ds.arm_count(1);
  std::size_t y1 = 0;
  for (const auto& r : ds.records()) {
    if (r.d == 0) {
      ++s.n_d0;
      y1 += r.y;
    }
  }
  s.outcome_prevalence_d0 = s.n_d0 ? double(y1) / double(s.n_d0) : 0.0;
  return s;
}

std::function<bool(const CaseRecord&)> subgroup_predicate(const DatasetSchema& schema,
                                                          const SubgroupDef& def) {
  std::vector<std::pair<int, int>> terms;  // covariate index, required value
  for (const auto& [name, value] : def.equals) {
    int idx = schema.covariate_index(name);
    if (idx < 0) throw ConfigError("subgroup " + def.name + " references unknown covariate " + name);
    terms.emplace_back(idx, value);
  }
  return [terms](const CaseRecord& r) {
    for (const auto& [idx, value] : terms)
      if (r.covariates[idx] != value) return false;
    return true;
  };
}

LossSpec LossSpec::simple(double l01) {
  if (!(l01 >= 0.0)) throw ConfigError("l01 must be nonnegative");
  LossSpec s;
  s.l01 = l01;
  return s;
}

LossSpec LossSpec::generic_loss(double l00, double l01, double l11) {
  if (!(l00 >= 0.0 && l01 >= 0.0 && l11 >= 0.0))
    throw ConfigError("generic loss weights must be nonnegative");
  LossSpec s;
  s.l01 = l01;
  s.generic = true;
  s.l00 = l00;
  s.l11 = l11;
  return s;
}

void ConfusionMatrix::check() const {
  const double sum = p00 + p01 + p10 + p11;
  if (p00 < 0 || p01 < 0 || p10 < 0 || p11 < 0 || std::fabs(sum - 1.0) > 1e-12)
    throw IncoherentInput("confusion matrix entries must be nonnegative and sum to 1");
}

double classification_risk(const ConfusionMatrix& cm, const LossSpec& loss) {
  cm.check();
  if (loss.generic)
    return cm.p10 + loss.l01 * cm.p01 + loss.l11 * cm.p11 + loss.l00 * cm.p00;
  return cm.p10 + loss.l01 * cm.p01;
}

AgreementTable agreement_table(const Dataset& ds, int arm) {
  AgreementTable t;
  for (const auto& r : ds.records()) {
    if (r.z != arm) continue;
    ++t.count[r.d][r.a];
    ++t.n;
  }
  if (t.n == 0) throw EmptyArm(arm);
  for (int d = 0; d < 2; ++d)
    for (int a = 0; a < 2; ++a) t.prop[d][a] = double(t.count[d][a]) / double(t.n);
  t.agreement = t.prop[0][0] + t.prop[1][1];
  return t;
}

AgreementDiff agreement_difference(const Dataset& ds) {
  AgreementDiff out;
  out.arm0 = agreement_table(ds, 0);
  out.arm1 = agreement_table(ds, 1);
  const double p0 = out.arm0.agreement, p1 = out.arm1.agreement;
  out.diff = p1 - p0;
  out.se = std::sqrt(p1 * (1.0 - p1) / double(out.arm1.n) + p0 * (1.0 - p0) / double(out.arm0.n));
  return out;
}

}  // namespace deceval
