#include "modnet/min_cost_flow.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

namespace modnet {

InfeasibleFlow::InfeasibleFlow(std::vector<int> cut, double shortfall)
    : Error(ErrorCode::kInfeasible, "flow problem infeasible; cut of " + std::to_string(cut.size()) +
                                        " nodes leaves " + std::to_string(shortfall) + " supply unrouted"),
      cut_(std::move(cut)),
      shortfall_(shortfall) {}

namespace {

struct Edge {
  int to;
  int rev;
  double cap;
  double cost;
};

class Residual {
 public:
  explicit Residual(int n) : adj_(static_cast<std::size_t>(n)) {}

  // Returns (node, position) of the forward edge.
  std::pair<int, int> add(int u, int v, double cap, double cost) {
    auto& au = adj_[static_cast<std::size_t>(u)];
    auto& av = adj_[static_cast<std::size_t>(v)];
    const int pos = static_cast<int>(au.size());
    au.push_back({v, static_cast<int>(av.size()), cap, cost});
    av.push_back({u, pos, 0.0, -cost});
    return {u, pos};
  }

  std::vector<Edge>& at(int u) { return adj_[static_cast<std::size_t>(u)]; }
  int size() const { return static_cast<int>(adj_.size()); }

 private:
  std::vector<std::vector<Edge>> adj_;
};

}  // namespace

FlowSolution solve_min_cost_flow(const FlowProblem& fp) {
  const int n = static_cast<int>(fp.divergence.size());
  double scale = 1.0;
  double total = 0.0, balance = 0.0;
  for (int i = 0; i < n; ++i) {
    balance += fp.divergence(i);
    if (fp.divergence(i) > 0.0) total += fp.divergence(i);
    scale = std::max(scale, std::abs(fp.divergence(i)));
  }
  if (std::abs(balance) > 1e-9 * scale) throw Error(ErrorCode::kInvalidInput, "divergences do not sum to zero");
  for (const auto& a : fp.arcs) {
    if (a.from < 0 || a.from >= n || a.to < 0 || a.to >= n || a.from == a.to) {
      throw Error(ErrorCode::kInvalidInput, "arc endpoints out of range");
    }
    if (!(a.cost > 0.0)) throw Error(ErrorCode::kInvalidInput, "arc costs must be positive");
    if (!(a.capacity >= 0.0)) throw Error(ErrorCode::kInvalidInput, "arc capacities must be nonnegative");
  }
  const double eps = 1e-13 * scale;

  const int source = n, sink = n + 1;
  Residual g(n + 2);
  std::vector<std::pair<int, int>> handle;
  handle.reserve(fp.arcs.size());
  for (const auto& a : fp.arcs) handle.push_back(g.add(a.from, a.to, a.capacity, a.cost));
  for (int i = 0; i < n; ++i) {
    if (fp.divergence(i) > 0.0) g.add(source, i, fp.divergence(i), 0.0);
    if (fp.divergence(i) < 0.0) g.add(i, sink, -fp.divergence(i), 0.0);
  }

  Vector pot = Vector::Zero(n + 2);
  std::vector<double> dist(static_cast<std::size_t>(n + 2));
  std::vector<int> prev_node(static_cast<std::size_t>(n + 2)), prev_edge(static_cast<std::size_t>(n + 2));
  double sent = 0.0;
  using Item = std::pair<double, int>;
  while (total - sent > eps) {
    std::fill(dist.begin(), dist.end(), kUnbounded);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[static_cast<std::size_t>(source)] = 0.0;
    pq.emplace(0.0, source);
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[static_cast<std::size_t>(u)]) continue;
      auto& edges = g.at(u);
      for (int k = 0; k < static_cast<int>(edges.size()); ++k) {
        const auto& e = edges[static_cast<std::size_t>(k)];
        if (e.cap <= eps) continue;
        const double reduced = std::max(0.0, e.cost + pot(u) - pot(e.to));
        const double nd = d + reduced;
        if (nd < dist[static_cast<std::size_t>(e.to)]) {
          dist[static_cast<std::size_t>(e.to)] = nd;
          prev_node[static_cast<std::size_t>(e.to)] = u;
          prev_edge[static_cast<std::size_t>(e.to)] = k;
          pq.emplace(nd, e.to);
        }
      }
    }
    const double dt = dist[static_cast<std::size_t>(sink)];
    if (dt == kUnbounded) {
      std::vector<int> cut;
      for (int i = 0; i < n; ++i) {
        if (dist[static_cast<std::size_t>(i)] < kUnbounded) cut.push_back(i);
      }
      throw InfeasibleFlow(std::move(cut), total - sent);
    }
    for (int v = 0; v < n + 2; ++v) pot(v) += std::min(dist[static_cast<std::size_t>(v)], dt);

    double push = kUnbounded;
    for (int v = sink; v != source; v = prev_node[static_cast<std::size_t>(v)]) {
      const auto& e = g.at(prev_node[static_cast<std::size_t>(v)])[static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])];
      push = std::min(push, e.cap);
    }
    push = std::min(push, total - sent);
    for (int v = sink; v != source; v = prev_node[static_cast<std::size_t>(v)]) {
      auto& e = g.at(prev_node[static_cast<std::size_t>(v)])[static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])];
      e.cap -= push;
      g.at(e.to)[static_cast<std::size_t>(e.rev)].cap += push;
    }
    sent += push;
  }

  FlowSolution sol;
  sol.flow = Vector::Zero(static_cast<Eigen::Index>(fp.arcs.size()));
  for (std::size_t a = 0; a < fp.arcs.size(); ++a) {
    const auto [u, pos] = handle[a];
    const auto& e = g.at(u)[static_cast<std::size_t>(pos)];
    // The flow on an arc is the capacity of its reverse residual edge.
    sol.flow(static_cast<Eigen::Index>(a)) = g.at(e.to)[static_cast<std::size_t>(e.rev)].cap;
    sol.cost += fp.arcs[a].cost * sol.flow(static_cast<Eigen::Index>(a));
  }
  sol.potential = pot.head(n);
  return sol;
}

double optimality_gap(const FlowProblem& fp, const FlowSolution& sol) {
  const int n = static_cast<int>(fp.divergence.size());
  double gap = 0.0;
  Vector net = Vector::Zero(n);
  for (std::size_t k = 0; k < fp.arcs.size(); ++k) {
    const auto& a = fp.arcs[k];
    const double f = sol.flow(static_cast<Eigen::Index>(k));
    net(a.from) += f;
    net(a.to) -= f;
    gap = std::max(gap, -f);
    if (a.capacity < kUnbounded) gap = std::max(gap, f - a.capacity);
    const double reduced = a.cost + sol.potential(a.from) - sol.potential(a.to);
    const double slack = a.capacity < kUnbounded ? a.capacity - f : kUnbounded;
    if (slack > 1e-12) gap = std::max(gap, -reduced);
    if (f > 1e-12) gap = std::max(gap, reduced);
  }
  gap = std::max(gap, (net - fp.divergence).cwiseAbs().maxCoeff());
  return gap;
}

}  // namespace modnet
