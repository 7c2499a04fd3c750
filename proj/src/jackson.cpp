#include "modnet/jackson.hpp"

#include "modnet/error.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>

namespace modnet {

namespace {

constexpr double kOverflowThreshold = 1e280;

double log_add(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Strongly connected components of the support graph of a square matrix,
// returned as component id per vertex (Tarjan, iterative).
std::vector<int> components(const Matrix& w, int& count) {
  const int n = static_cast<int>(w.rows());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<char> on_stack(n, 0);
  int next = 0;
  count = 0;
  struct Frame { int v; int edge; };
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = next++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& f = call.back();
      if (f.edge < n) {
        const int u = f.edge++;
        if (w(f.v, u) <= 0.0) continue;
        if (index[u] < 0) {
          index[u] = low[u] = next++;
          stack.push_back(u);
          on_stack[u] = 1;
          call.push_back({u, 0});
        } else if (on_stack[u]) {
          low[f.v] = std::min(low[f.v], index[u]);
        }
        continue;
      }
      const int v = f.v;
      if (low[v] == index[v]) {
        int u;
        do {
          u = stack.back();
          stack.pop_back();
          on_stack[u] = 0;
          comp[u] = count;
        } while (u != v);
        ++count;
      }
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  return comp;
}

void require_station_rates(const JacksonNetwork& net, const Vector& pi) {
  for (int i = 0; i < net.stations; ++i) {
    if (pi(i) > 0.0 && !(net.station_rate(i) > 0.0)) {
      throw Error(ErrorCode::kZeroRate, "station " + std::to_string(i) + " has zero rate but positive throughput");
    }
  }
}

double lumped_delay(const JacksonNetwork& net, const Vector& pi) {
  double d = 0.0;
  for (int u = net.stations; u < net.node_count(); ++u) d += pi(u) * net.road_time(u);
  return d;
}

}  // namespace

Vector relative_throughput(const JacksonNetwork& net) {
  const int n = net.stations;
  const Matrix& p = net.station_routing;
  int count = 0;
  const auto comp = components(p, count);

  std::vector<char> closed(count, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (p(i, j) > 0.0 && comp[i] != comp[j]) closed[comp[i]] = 0;
    }
  }
  int closed_id = -1;
  for (int c = 0; c < count; ++c) {
    if (!closed[c]) continue;
    if (closed_id >= 0) throw Error(ErrorCode::kSingularChain, "station routing chain has several closed classes");
    closed_id = c;
  }

  std::vector<int> members;
  for (int i = 0; i < n; ++i) {
    if (comp[i] == closed_id) members.push_back(i);
  }
  const auto c = static_cast<Eigen::Index>(members.size());
  // (P_C^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
  Matrix a(c, c);
  for (Eigen::Index r = 0; r < c; ++r) {
    for (Eigen::Index k = 0; k < c; ++k) a(r, k) = p(members[k], members[r]) - (r == k ? 1.0 : 0.0);
  }
  a.row(c - 1).setOnes();
  Vector b = Vector::Zero(c);
  b(c - 1) = 1.0;
  const Vector sol = a.fullPivLu().solve(b);

  Vector pi = Vector::Zero(net.node_count());
  for (Eigen::Index k = 0; k < c; ++k) pi(members[k]) = std::max(0.0, sol(k));
  const double top = pi.head(n).maxCoeff();
  if (!(top > 0.0)) throw Error(ErrorCode::kSingularChain, "stationary vector vanished");
  pi.head(n) /= top;
  for (int u = n; u < net.node_count(); ++u) {
    const auto& nd = net.nodes[u];
    pi(u) = pi(nd.parent) * p(nd.parent, nd.child);
  }
  return pi;
}

Vector relative_utilization(const JacksonNetwork& net, const Vector& pi) {
  require_station_rates(net, pi);
  Vector gamma(net.node_count());
  for (int u = 0; u < net.node_count(); ++u) {
    if (net.is_station(u)) {
      gamma(u) = pi(u) > 0.0 ? pi(u) / net.station_rate(u) : 0.0;
    } else {
      gamma(u) = pi(u) * net.road_time(u);
    }
  }
  return gamma;
}

double NormalizationConstants::ratio(int k) const {
  return std::exp(log_g[static_cast<std::size_t>(k - 1)] - log_g[static_cast<std::size_t>(k)]);
}

NormalizationConstants normalization_constants(const JacksonNetwork& net, const Vector& pi, int m) {
  if (m < 0) throw Error(ErrorCode::kInvalidInput, "negative population");
  const Vector gamma = relative_utilization(net, pi);
  const double delay = lumped_delay(net, pi);
  const auto len = static_cast<std::size_t>(m) + 1;

  NormalizationConstants out;
  std::vector<double> g(len);
  g[0] = 1.0;
  bool overflow = false;
  for (std::size_t k = 1; k < len && !overflow; ++k) {
    g[k] = g[k - 1] * delay / static_cast<double>(k);
    overflow = g[k] > kOverflowThreshold;
  }
  for (int i = 0; i < net.stations && !overflow; ++i) {
    if (gamma(i) == 0.0) continue;
    for (std::size_t k = 1; k < len; ++k) {
      g[k] += gamma(i) * g[k - 1];
      if (g[k] > kOverflowThreshold) {
        overflow = true;
        break;
      }
    }
  }

  for (std::size_t k = 1; k < len && !overflow; ++k) overflow = g[k] < 1.0 / kOverflowThreshold;

  if (!overflow) {
    out.log_g.resize(len);
    for (std::size_t k = 0; k < len; ++k) out.log_g[k] = std::log(g[k]);
    out.g = std::move(g);
    return out;
  }

  std::vector<double> lg(len);
  lg[0] = 0.0;
  const double log_delay = delay > 0.0 ? std::log(delay) : -INFINITY;
  for (std::size_t k = 1; k < len; ++k) {
    lg[k] = delay > 0.0 ? static_cast<double>(k) * log_delay - std::lgamma(static_cast<double>(k) + 1.0) : -INFINITY;
  }
  for (int i = 0; i < net.stations; ++i) {
    if (gamma(i) == 0.0) continue;
    const double lgam = std::log(gamma(i));
    for (std::size_t k = 1; k < len; ++k) lg[k] = log_add(lg[k], lgam + lg[k - 1]);
  }
  out.overflowed = true;
  out.g.resize(len);
  for (std::size_t k = 0; k < len; ++k) out.g[k] = std::exp(lg[k]);
  out.log_g = std::move(lg);
  return out;
}

ThroughputAvailability throughput_and_availability(const JacksonNetwork& net, const Vector& pi,
                                                   const Vector& gamma, const NormalizationConstants& g,
                                                   int m) {
  if (m < 0 || m > g.max_population()) throw Error(ErrorCode::kInvalidInput, "population outside G range");
  ThroughputAvailability out;
  out.throughput = Vector::Zero(net.node_count());
  out.availability = Vector::Zero(net.stations);
  if (m == 0) return out;
  const double ratio = g.ratio(m);
  out.throughput = pi * ratio;
  out.availability = gamma.head(net.stations) * ratio;
  return out;
}

MvaResult mva(const JacksonNetwork& net, int m) {
  if (m < 1) throw Error(ErrorCode::kInvalidInput, "MVA needs population >= 1");
  const Vector pi = relative_throughput(net);
  require_station_rates(net, pi);
  const int nodes = net.node_count();
  MvaResult r;
  r.wait = Matrix::Zero(m, nodes);
  r.queue_length = Matrix::Zero(m, nodes);
  r.throughput = Matrix::Zero(m, nodes);
  r.availability = Matrix::Zero(m, net.stations);

  Vector prev_len = Vector::Zero(nodes);
  Vector wait(nodes);
  for (int k = 1; k <= m; ++k) {
    double cycle = 0.0;
    for (int u = 0; u < nodes; ++u) {
      if (net.is_station(u)) {
        wait(u) = pi(u) > 0.0 ? (1.0 + prev_len(u)) / net.station_rate(u) : 0.0;
      } else {
        wait(u) = net.road_time(u);
      }
      cycle += pi(u) * wait(u);
    }
    const double x = k / cycle;
    const auto row = k - 1;
    for (int u = 0; u < nodes; ++u) {
      const double lam = pi(u) * x;
      r.wait(row, u) = wait(u);
      r.throughput(row, u) = lam;
      r.queue_length(row, u) = lam * wait(u);
      if (u < net.stations) r.availability(row, u) = pi(u) > 0.0 ? lam / net.station_rate(u) : 0.0;
    }
    prev_len = r.queue_length.row(row).transpose();
  }
  return r;
}

Vector station_delay_availability(const Vector& demand, double delay, int m) {
  const auto n = demand.size();
  if (m <= 0) return Vector::Zero(n);
  Vector len = Vector::Zero(n);
  double x = 0.0;
  for (int k = 1; k <= m; ++k) {
    double cycle = delay;
    for (Eigen::Index i = 0; i < n; ++i) cycle += demand(i) * (1.0 + len(i));
    x = k / cycle;
    for (Eigen::Index i = 0; i < n; ++i) len(i) = x * demand(i) * (1.0 + len(i));
  }
  return demand * x;
}

Vector mva_availability(const JacksonNetwork& net, const Vector& pi, int m) {
  const int n = net.stations;
  require_station_rates(net, pi);
  Vector demand(n);  // pi_i / mu_i, the per-visit service demand
  for (int i = 0; i < n; ++i) demand(i) = pi(i) > 0.0 ? pi(i) / net.station_rate(i) : 0.0;
  return station_delay_availability(demand, lumped_delay(net, pi), m);
}

AnalysisResult analyze(const JacksonNetwork& net) {
  AnalysisResult a;
  a.pi = relative_throughput(net);
  a.gamma = relative_utilization(net, a.pi);
  const int m = net.population;
  a.g = normalization_constants(net, a.pi, m);
  auto ta = throughput_and_availability(net, a.pi, a.gamma, a.g, m);
  a.throughput = std::move(ta.throughput);
  a.availability = std::move(ta.availability);
  if (m >= 1) {
    const auto r = mva(net, m);
    a.queue_length = r.queue_length.row(m - 1).transpose();
    a.wait = r.wait.row(m - 1).transpose();
  } else {
    a.queue_length = Vector::Zero(net.node_count());
    a.wait = Vector::Zero(net.node_count());
  }
  return a;
}

double product_form_probability(const JacksonNetwork& net, const Vector& pi, const NormalizationConstants& g,
                                const std::vector<int>& occupancy) {
  int total = 0;
  double log_w = 0.0;
  for (int u = 0; u < net.node_count(); ++u) {
    const int x = occupancy[static_cast<std::size_t>(u)];
    total += x;
    if (x == 0) continue;
    if (pi(u) == 0.0) return 0.0;
    log_w += x * std::log(pi(u));
    for (int k = 1; k <= x; ++k) log_w -= std::log(net.service_rate(u, k));
  }
  if (total > g.max_population()) throw Error(ErrorCode::kInvalidInput, "occupancy exceeds G range");
  return std::exp(log_w - g.log_g[static_cast<std::size_t>(total)]);
}

CtmcDistribution ctmc_oracle(const JacksonNetwork& net, int m, std::size_t state_cap) {
  const int k = net.node_count();
  if (m < 0 || k == 0) throw Error(ErrorCode::kInvalidInput, "empty network or negative population");
  // C(m + k - 1, m), stopping early once it passes the cap.
  double count = 1.0;
  for (int i = 1; i <= m; ++i) {
    count = count * (k - 1 + i) / i;
    if (count > static_cast<double>(state_cap)) break;
  }
  if (count > static_cast<double>(state_cap) + 0.5) {
    throw Error(ErrorCode::kStateSpaceTooLarge, "state space exceeds cap " + std::to_string(state_cap));
  }

  CtmcDistribution d;
  std::vector<int> x(static_cast<std::size_t>(k), 0);
  // Enumerate compositions of m into k parts in lexicographic order.
  auto enumerate = [&](auto&& self, int node, int left) -> void {
    if (node == k - 1) {
      x[static_cast<std::size_t>(node)] = left;
      d.states.push_back(x);
      return;
    }
    for (int v = left; v >= 0; --v) {
      x[static_cast<std::size_t>(node)] = v;
      self(self, node + 1, left - v);
    }
  };
  enumerate(enumerate, 0, m);

  std::map<std::vector<int>, int> index;
  for (std::size_t s = 0; s < d.states.size(); ++s) index.emplace(d.states[s], static_cast<int>(s));

  const auto ns = static_cast<Eigen::Index>(d.states.size());
  std::vector<Eigen::Triplet<double>> trip;
  Vector diag = Vector::Zero(ns);
  for (Eigen::Index s = 0; s < ns; ++s) {
    auto y = d.states[static_cast<std::size_t>(s)];
    for (int u = 0; u < k; ++u) {
      const int xu = y[static_cast<std::size_t>(u)];
      if (xu == 0) continue;
      const double rate = net.service_rate(u, xu);
      if (rate == 0.0) continue;
      for (const auto& a : net.out[static_cast<std::size_t>(u)]) {
        y[static_cast<std::size_t>(u)] -= 1;
        y[static_cast<std::size_t>(a.to)] += 1;
        const int t = index.at(y);
        y[static_cast<std::size_t>(a.to)] -= 1;
        y[static_cast<std::size_t>(u)] += 1;
        const double q = rate * a.prob;
        diag(s) -= q;
        // Transposed generator: row t collects inflow from s. Row 0 is
        // replaced by the normalization equation.
        if (t != 0) trip.emplace_back(t, s, q);
      }
    }
  }
  for (Eigen::Index s = 1; s < ns; ++s) trip.emplace_back(s, s, diag(s));
  for (Eigen::Index s = 0; s < ns; ++s) trip.emplace_back(0, s, 1.0);

  Eigen::SparseMatrix<double> a(ns, ns);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw Error(ErrorCode::kSingularChain, "global balance system is singular");
  Vector rhs = Vector::Zero(ns);
  rhs(0) = 1.0;
  d.probability = lu.solve(rhs);
  return d;
}

}  // namespace modnet
