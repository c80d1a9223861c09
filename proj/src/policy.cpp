#include "deceval/policy.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "deceval/bounds.hpp"
#include "deceval/errors.hpp"
#include "deceval/point_estimator.hpp"

namespace deceval {

ScoreLattice::ScoreLattice(std::vector<AxisSpec> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw ConfigError("lattice needs at least one axis");
  for (const auto& ax : axes_) {
    if (ax.name != "fta" && ax.name != "nca" && ax.name != "nvca")
      throw ConfigError("unknown lattice axis: " + ax.name);
    if (ax.hi < ax.lo) throw ConfigError("axis range is empty: " + ax.name);
  }
  stride_.assign(axes_.size(), 1);
  for (int k = int(axes_.size()) - 2; k >= 0; --k)
    stride_[k] = stride_[k + 1] * axes_[k + 1].size();
  n_cells_ = stride_[0] * axes_[0].size();
}

std::vector<int> ScoreLattice::coords(int cell) const {
  std::vector<int> c(axes_.size());
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    c[k] = cell / stride_[k] % axes_[k].size();
  }
  return c;
}

std::vector<int> ScoreLattice::scores(int cell) const {
  std::vector<int> c = coords(cell);
  for (std::size_t k = 0; k < axes_.size(); ++k) c[k] += axes_[k].lo;
  return c;
}

int ScoreLattice::cell_of(const CaseRecord& r) const {
  int cell = 0;
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    const AxisSpec& ax = axes_[k];
    int v;
    if (ax.name == "fta")
      v = r.fta;
    else if (ax.name == "nca")
      v = r.nca;
    else
      v = r.nvca;
    if (v < 0) throw MissingScores("dataset has no risk scores");
    if (v < ax.lo || v > ax.hi)
      throw UnknownCell(ax.name + "=" + std::to_string(v) + " is off the lattice");
    cell += (v - ax.lo) * stride_[k];
  }
  return cell;
}

bool ScoreLattice::leq(int c1, int c2) const {
  const std::vector<int> a = coords(c1), b = coords(c2);
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] > b[k]) return false;
  return true;
}

std::vector<std::vector<int>> ScoreLattice::cover_successors() const {
  std::vector<std::vector<int>> succ(n_cells_);
  for (int c = 0; c < n_cells_; ++c) {
    const std::vector<int> co = coords(c);
    for (std::size_t k = 0; k < axes_.size(); ++k)
      if (co[k] + 1 < axes_[k].size()) succ[c].push_back(c + stride_[k]);
  }
  return succ;
}

std::vector<std::vector<int>> ScoreLattice::cover_predecessors() const {
  const std::vector<std::vector<int>> succ = cover_successors();
  std::vector<std::vector<int>> pred(n_cells_);
  for (int c = 0; c < n_cells_; ++c)
    for (int s : succ[c]) pred[s].push_back(c);
  return pred;
}

ScoreLattice default_score_lattice() {
  return ScoreLattice({{"fta", 1, 6}, {"nca", 1, 6}, {"nvca", 0, 1}});
}

std::vector<int> MonotonePolicy::selected_cells() const {
  std::vector<int> out;
  for (const auto& c : cells)
    if (c.selected) out.push_back(c.cell);
  return out;
}

bool MonotonePolicy::selects(const CaseRecord& r) const {
  return cells[lattice.cell_of(r)].selected;
}

std::vector<std::int64_t> quantize_weights(const std::vector<double>& w) {
  double maxabs = 0;
  for (double x : w) maxabs = std::max(maxabs, std::fabs(x));
  std::vector<std::int64_t> q(w.size(), 0);
  if (maxabs == 0) return q;
  const double scale = double(std::int64_t(1) << 40) / maxabs;
  for (std::size_t i = 0; i < w.size(); ++i) q[i] = std::llround(w[i] * scale);
  return q;
}

namespace {

struct FlowNet {
  struct Edge {
    int to;
    std::int64_t cap;
    std::size_t rev;
  };
  std::vector<std::vector<Edge>> adj;

  explicit FlowNet(int n) : adj(n) {}

  void add(int u, int v, std::int64_t cap) {
    adj[u].push_back({v, cap, adj[v].size()});
    adj[v].push_back({u, 0, adj[u].size() - 1});
  }

  // Edmonds-Karp; capacities are integers so this is exact.
  void max_flow(int s, int t) {
    const int n = int(adj.size());
    std::vector<int> prev_node(n), prev_edge(n);
    for (;;) {
      std::fill(prev_node.begin(), prev_node.end(), -1);
      prev_node[s] = s;
      std::queue<int> bfs;
      bfs.push(s);
      while (!bfs.empty() && prev_node[t] < 0) {
        const int u = bfs.front();
        bfs.pop();
        for (std::size_t k = 0; k < adj[u].size(); ++k) {
          const Edge& e = adj[u][k];
          if (e.cap > 0 && prev_node[e.to] < 0) {
            prev_node[e.to] = u;
            prev_edge[e.to] = int(k);
            bfs.push(e.to);
          }
        }
      }
      if (prev_node[t] < 0) return;
      std::int64_t push = INT64_MAX;
      for (int v = t; v != s; v = prev_node[v])
        push = std::min(push, adj[prev_node[v]][prev_edge[v]].cap);
      for (int v = t; v != s; v = prev_node[v]) {
        Edge& e = adj[prev_node[v]][prev_edge[v]];
        e.cap -= push;
        adj[e.to][e.rev].cap += push;
      }
    }
  }

  std::vector<char> reachable(int s) const {
    std::vector<char> seen(adj.size(), 0);
    std::queue<int> bfs;
    bfs.push(s);
    seen[s] = 1;
    while (!bfs.empty()) {
      const int u = bfs.front();
      bfs.pop();
      for (const Edge& e : adj[u])
        if (e.cap > 0 && !seen[e.to]) {
          seen[e.to] = 1;
          bfs.push(e.to);
        }
    }
    return seen;
  }
};

}  // namespace

std::vector<char> min_cost_closure(const std::vector<std::int64_t>& w,
                                   const std::vector<std::vector<int>>& succ) {
  const int n = int(w.size());
  if (int(succ.size()) != n) throw ConfigError("weight/graph size mismatch");
  const int source = n, sink = n + 1;
  FlowNet net(n + 2);
  // Profit of picking cell c is -w[c]; closure constraints get effectively
  // infinite arcs so they can never sit on a finite cut.
  std::int64_t inf = 1;
  for (std::int64_t x : w) inf += std::llabs(x);
  for (int c = 0; c < n; ++c) {
    if (w[c] < 0) net.add(source, c, -w[c]);
    if (w[c] > 0) net.add(c, sink, w[c]);
    for (int s : succ[c]) {
      if (s < 0 || s >= n) throw ConfigError("successor index out of range");
      net.add(c, s, inf);
    }
  }
  net.max_flow(source, sink);
  // Residual reachability from the source is the smallest optimal source side,
  // hence the unique inclusion-minimal optimal closure.
  const std::vector<char> keep = net.reachable(source);
  std::vector<char> out(n, 0);
  for (int c = 0; c < n; ++c) out[c] = keep[c];
  return out;
}

MonotonePolicy learn_policy(const Dataset& ds, const NuisanceFit& fit, double l01,
                            PolicyKind kind, PolicyDirection direction,
                            const ScoreLattice& lattice) {
  if (!(l01 > 0)) throw ConfigError("l01 must be positive");
  if (!ds.has_scores()) throw MissingScores("dataset has no risk scores");
  const std::size_t n = ds.n();

  std::vector<double> summand(n);
  if (kind == PolicyKind::Provision) {
    const InfluenceBases ib = influence_bases(ds, fit);
    for (std::size_t i = 0; i < n; ++i)
      summand[i] = (ib.a[1][i] - ib.a[0][i]) + l01 * (ib.b[1][i] - ib.b[0][i]);
  } else {
    const BoundsBases bb = bounds_bases(ds, fit);
    for (std::size_t i = 0; i < n; ++i) summand[i] = bb.ua[0][i] + l01 * bb.ub[0][i];
  }

  MonotonePolicy policy;
  policy.kind = kind;
  policy.direction = direction;
  policy.l01 = l01;
  policy.lattice = lattice;
  const int C = lattice.n_cells();
  policy.cells.resize(C);
  std::vector<double> weight(C, 0.0);
  std::vector<std::size_t> count(C, 0);
  const auto& records = ds.records();
  for (std::size_t i = 0; i < n; ++i) {
    const int c = lattice.cell_of(records[i]);
    weight[c] += summand[i] / double(n);
    ++count[c];
  }

  const auto succ = direction == PolicyDirection::Increasing ? lattice.cover_successors()
                                                             : lattice.cover_predecessors();
  const std::vector<char> selected = min_cost_closure(quantize_weights(weight), succ);

  policy.value = 0.0;
  for (int c = 0; c < C; ++c) {
    PolicyCell& cell = policy.cells[c];
    cell.cell = c;
    cell.scores = lattice.scores(c);
    cell.weight = weight[c];
    cell.count = count[c];
    cell.mean = count[c] ? weight[c] * double(n) / double(count[c]) : 0.0;
    cell.selected = selected[c] != 0;
    if (cell.selected) policy.value += cell.weight;
  }
  return policy;
}

MonotonePolicy learn_policy(const Dataset& ds, const NuisanceFit& fit, double l01,
                            PolicyKind kind, PolicyDirection direction) {
  return learn_policy(ds, fit, l01, kind, direction, default_score_lattice());
}

double PolicyValueEstimate::se() const { return n ? std::sqrt(variance / double(n)) : 0.0; }

PolicyValueEstimate evaluate_policy_value(const Dataset& ds, const NuisanceFit& fit,
                                          const MonotonePolicy& policy) {
  if (!ds.has_scores()) throw MissingScores("dataset has no risk scores");
  const std::size_t n = ds.n();
  std::vector<double> summand(n);
  if (policy.kind == PolicyKind::Provision) {
    const InfluenceBases ib = influence_bases(ds, fit);
    for (std::size_t i = 0; i < n; ++i)
      summand[i] = (ib.a[1][i] - ib.a[0][i]) + policy.l01 * (ib.b[1][i] - ib.b[0][i]);
  } else {
    const BoundsBases bb = bounds_bases(ds, fit);
    for (std::size_t i = 0; i < n; ++i) summand[i] = bb.ua[0][i] + policy.l01 * bb.ub[0][i];
  }
  const auto& records = ds.records();
  PolicyValueEstimate est;
  est.n = n;
  double acc = 0;
  std::vector<double> kept(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (policy.selects(records[i])) kept[i] = summand[i];
    acc += kept[i];
  }
  est.value = n ? acc / double(n) : 0.0;
  double ss = 0;
  for (double v : kept) ss += (v - est.value) * (v - est.value);
  est.variance = n ? ss / double(n) : 0.0;
  return est;
}

}  // namespace deceval
