#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deceval/data.hpp"
#include "deceval/nuisance.hpp"

namespace deceval {

struct AxisSpec {
  std::string name;  // "fta", "nca" or "nvca"
  int lo = 0, hi = 0;  // inclusive
  int size() const { return hi - lo + 1; }
};

// Grid over integer score vectors, ordered componentwise. Cell ids are mixed
// radix with the last axis fastest.
class ScoreLattice {
 public:
  ScoreLattice() = default;
  explicit ScoreLattice(std::vector<AxisSpec> axes);

  const std::vector<AxisSpec>& axes() const { return axes_; }
  int n_cells() const { return n_cells_; }
  std::vector<int> coords(int cell) const;          // offsets from each axis lo
  std::vector<int> scores(int cell) const;          // actual score values
  int cell_of(const CaseRecord& r) const;           // MissingScores / UnknownCell
  bool leq(int c1, int c2) const;                   // componentwise on coords
  // Immediate componentwise successors (+1 along one axis).
  std::vector<std::vector<int>> cover_successors() const;
  std::vector<std::vector<int>> cover_predecessors() const;

 private:
  std::vector<AxisSpec> axes_;
  std::vector<int> stride_;
  int n_cells_ = 1;
};

ScoreLattice default_score_lattice();  // fta 1..6, nca 1..6, nvca 0..1

enum class PolicyDirection { Increasing, Decreasing };
enum class PolicyKind { Provision, Follow };

struct PolicyCell {
  int cell = 0;
  std::vector<int> scores;
  double weight = 0.0;     // objective share: (1/n) * sum of member summands
  std::size_t count = 0;   // member records
  double mean = 0.0;       // average member summand, 0 for empty cells
  bool selected = false;
};

struct MonotonePolicy {
  PolicyKind kind = PolicyKind::Provision;
  PolicyDirection direction = PolicyDirection::Increasing;
  double l01 = 1.0;
  ScoreLattice lattice;
  std::vector<PolicyCell> cells;
  double value = 0.0;  // sum of selected weights

  std::vector<int> selected_cells() const;
  bool selects(const CaseRecord& r) const;
};

// Scale-normalized fixed-point weights shared by the solver and by any
// exhaustive cross-check, so both optimize the identical integer objective.
std::vector<std::int64_t> quantize_weights(const std::vector<double>& w);

// Minimizes sum of w over sets closed under succ (c in S forces succ(c) in S)
// by a max-flow reduction; among minimizers returns the unique one contained
// in all others.
std::vector<char> min_cost_closure(const std::vector<std::int64_t>& w,
                                   const std::vector<std::vector<int>>& succ);

// Empirical risk minimization over monotone score policies. Provision weights
// are the with-AI-minus-human summands; follow weights are the upper-bound
// summands of AI against the no-recommendation arm. Increasing policies are
// upward closed in the score order, decreasing ones downward closed.
MonotonePolicy learn_policy(const Dataset& ds, const NuisanceFit& fit, double l01,
                            PolicyKind kind, PolicyDirection direction,
                            const ScoreLattice& lattice);
MonotonePolicy learn_policy(const Dataset& ds, const NuisanceFit& fit, double l01,
                            PolicyKind kind, PolicyDirection direction);

struct PolicyValueEstimate {
  double value = 0.0;
  double variance = 0.0;  // of the centered selected-summand mean
  std::size_t n = 0;
  double se() const;
};

// Re-evaluates a learned policy on a dataset (not necessarily the training
// one) with the same summand definition the policy was fit with.
PolicyValueEstimate evaluate_policy_value(const Dataset& ds, const NuisanceFit& fit,
                                          const MonotonePolicy& policy);

}  // namespace deceval
