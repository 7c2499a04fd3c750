#include "modnet/scenario.hpp"

#include "modnet/error.hpp"

#include <cmath>
#include <sstream>

namespace modnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kDegenerateStation: return "DegenerateStation";
    case ErrorCode::kInfeasibleSplit: return "InfeasibleSplit";
    case ErrorCode::kBadTopology: return "BadTopology";
    case ErrorCode::kSingularChain: return "SingularChain";
    case ErrorCode::kZeroRate: return "ZeroRate";
    case ErrorCode::kOverflow: return "Overflow";
    case ErrorCode::kStateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kNoProgress: return "NoProgress";
    case ErrorCode::kInfeasibleStart: return "InfeasibleStart";
    case ErrorCode::kNotReachedWithinBounds: return "NotReachedWithinBounds";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptyWindow: return "EmptyWindow";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDisconnectedDemand: return "DisconnectedDemand";
  }
  return "Unknown";
}

std::string Violation::describe() const {
  std::ostringstream os;
  os << field << ": " << rule;
  if (row >= 0) {
    os << " at [" << row;
    if (col >= 0) os << "," << col;
    os << "]";
  }
  return os.str();
}

bool strongly_connected(const Matrix& weights, double threshold) {
  const auto n = weights.rows();
  if (n == 0 || weights.cols() != n) return false;
  auto reach_all = [&](bool transpose) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    Eigen::Index count = 1;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (Eigen::Index v = 0; v < n; ++v) {
        const double w = transpose ? weights(v, u) : weights(u, v);
        if (w > threshold && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  return reach_all(false) && reach_all(true);
}

namespace {

void check_square(std::vector<Violation>& out, const Matrix& m, int n, const char* field) {
  if (m.rows() != n || m.cols() != n) out.push_back({field, "dimension"});
}

void check_stochastic_rows(std::vector<Violation>& out, const Matrix& m, const char* field) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!(m(i, j) >= 0.0)) out.push_back({field, "nonnegative", int(i), int(j)});
    }
    if (m(i, i) != 0.0) out.push_back({field, "zero-diagonal", int(i), int(i)});
    if (std::abs(m.row(i).sum() - 1.0) > kRowSumTol) out.push_back({field, "row-sum", int(i)});
  }
}

}  // namespace

std::vector<Violation> validate_scenario(const Scenario& s) {
  std::vector<Violation> out;
  const int n = s.size();
  if (n < 2) {
    out.push_back({"n", "at-least-two-stations"});
    return out;
  }
  check_square(out, s.p, n, "p");
  check_square(out, s.t, n, "t");
  if (!out.empty()) return out;
  for (int i = 0; i < n; ++i) {
    if (!(s.lambda(i) > 0.0) || !std::isfinite(s.lambda(i))) out.push_back({"lambda", "positive", i});
  }
  check_stochastic_rows(out, s.p, "p");
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && !(s.t(i, j) > 0.0 && std::isfinite(s.t(i, j)))) out.push_back({"t", "positive", i, j});
    }
  }
  if (!strongly_connected(s.p)) out.push_back({"p", "irreducibility"});
  if (s.coords && s.coords->rows() != n) out.push_back({"coords", "dimension"});
  return out;
}

void FleetConfig::validate() const {
  if (drivers < 0 || vehicles <= drivers) {
    throw Error(ErrorCode::kInvalidInput, "fleet requires vehicles > drivers >= 0 (got " +
                                              std::to_string(vehicles) + ", " + std::to_string(drivers) + ")");
  }
}

RebalanceParams RebalanceParams::none(int n) {
  RebalanceParams rp;
  rp.lambda_del = Vector::Zero(n);
  rp.psi = Vector::Zero(n);
  rp.eta = Matrix::Constant(n, n, n > 1 ? 1.0 / (n - 1) : 0.0);
  rp.eta.diagonal().setZero();
  rp.xi = rp.eta;
  return rp;
}

std::vector<Violation> validate_rebalance(const Scenario& s, const RebalanceParams& rp) {
  std::vector<Violation> out;
  const int n = s.size();
  if (rp.lambda_del.size() != n) out.push_back({"lambda_del", "dimension"});
  if (rp.psi.size() != n) out.push_back({"psi", "dimension"});
  check_square(out, rp.eta, n, "eta");
  check_square(out, rp.xi, n, "xi");
  if (!out.empty()) return out;
  for (int i = 0; i < n; ++i) {
    if (!(rp.lambda_del(i) >= 0.0)) out.push_back({"lambda_del", "nonnegative", i});
    if (!(rp.psi(i) >= 0.0)) out.push_back({"psi", "nonnegative", i});
  }
  check_stochastic_rows(out, rp.eta, "eta");
  check_stochastic_rows(out, rp.xi, "xi");
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (rp.lambda_del(i) * rp.eta(i, j) > s.lambda(i) * s.p(i, j) + 1e-9) {
        out.push_back({"lambda_del*eta", "coupling", i, j});
      }
    }
  }
  return out;
}

SplitParams split_demand(const Scenario& s, const RebalanceParams& rp) {
  const int n = s.size();
  auto problems = validate_rebalance(s, rp);
  for (const auto& v : problems) {
    if (v.rule == "coupling") {
      throw Error(ErrorCode::kInfeasibleSplit, "delegated flow exceeds demand: " + v.describe());
    }
  }
  if (!problems.empty()) throw Error(ErrorCode::kInvalidInput, problems.front().describe());

  SplitParams sp;
  sp.q.resize(n);
  sp.lambda1.resize(n);
  sp.lambda2.resize(n);
  sp.virtual_fraction.resize(n);
  sp.p1 = Matrix::Zero(n, n);
  sp.p2 = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (rp.lambda_del(i) > s.lambda(i) + 1e-9) {
      throw Error(ErrorCode::kInfeasibleSplit, "lambda_del exceeds lambda at station " + std::to_string(i));
    }
    sp.lambda1(i) = std::max(0.0, s.lambda(i) - rp.lambda_del(i));
    sp.lambda2(i) = rp.lambda_del(i) + rp.psi(i);
    sp.q(i) = sp.lambda1(i) / s.lambda(i);

    if (sp.lambda1(i) > 0.0) {
      double row_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        // Same as p_ij / q_i - (1 - q_i) / q_i * eta_ij, without dividing twice.
        double v = (s.lambda(i) * s.p(i, j) - rp.lambda_del(i) * rp.eta(i, j)) / sp.lambda1(i);
        if (v < -1e-9) {
          throw Error(ErrorCode::kInfeasibleSplit, "negative System 1 routing at [" + std::to_string(i) + "," +
                                                       std::to_string(j) + "]");
        }
        v = std::max(v, 0.0);
        if (v == 0.0 && s.p(i, j) > 0.0) sp.saturated_pairs.emplace_back(i, j);
        sp.p1(i, j) = v;
        row_sum += v;
      }
      if (row_sum > 0.0) sp.p1.row(i) /= row_sum;
    } else {
      sp.degenerate1.push_back(i);
      for (int j = 0; j < n; ++j) sp.p1(i, j) = j == i ? 0.0 : 1.0 / (n - 1);
    }

    if (sp.lambda2(i) > 0.0) {
      sp.virtual_fraction(i) = rp.psi(i) / sp.lambda2(i);
    } else {
      sp.virtual_fraction(i) = 0.0;
      sp.degenerate2.push_back(i);
    }
    const double f = sp.virtual_fraction(i);
    sp.p2.row(i) = f * rp.xi.row(i) + (1.0 - f) * rp.eta.row(i);
  }
  return sp;
}

double JacksonNetwork::service_rate(int node, int n) const {
  if (is_station(node)) return station_rate(node);
  return static_cast<double>(n) / road_time(node);
}

int JacksonNetwork::road_index(int i, int j) const {
  return road_lookup[static_cast<std::size_t>(i * stations + j)];
}

Matrix JacksonNetwork::routing_dense() const {
  Matrix r = Matrix::Zero(node_count(), node_count());
  for (int u = 0; u < node_count(); ++u) {
    for (const auto& a : out[static_cast<std::size_t>(u)]) r(u, a.to) += a.prob;
  }
  return r;
}

JacksonNetwork build_network(const Vector& rates, const Matrix& routing, const Matrix& t, int population) {
  const auto n = static_cast<int>(rates.size());
  if (routing.rows() != n || routing.cols() != n || t.rows() != n || t.cols() != n) {
    throw Error(ErrorCode::kInvalidInput, "network dimensions disagree");
  }
  if (population < 0) throw Error(ErrorCode::kInvalidInput, "negative population");

  JacksonNetwork net;
  net.stations = n;
  net.population = population;
  net.station_rate = rates;
  net.station_routing = routing;
  net.road_lookup.assign(static_cast<std::size_t>(n * n), -1);

  for (int i = 0; i < n; ++i) {
    if (!(rates(i) >= 0.0) || !std::isfinite(rates(i))) {
      throw Error(ErrorCode::kInvalidInput, "station rate must be finite and nonnegative");
    }
    const double row = routing.row(i).sum();
    if (std::abs(row - 1.0) > kRowSumTol && !(row == 0.0 && rates(i) == 0.0)) {
      throw Error(ErrorCode::kInvalidInput, "routing row " + std::to_string(i) + " does not sum to 1");
    }
    net.nodes.push_back({NodeKind::kStation, i, i});
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (routing(i, j) < 0.0) throw Error(ErrorCode::kInvalidInput, "negative routing probability");
      if (routing(i, j) == 0.0) continue;
      if (i == j) throw Error(ErrorCode::kBadTopology, "self-loop at station " + std::to_string(i));
      if (!(t(i, j) > 0.0) || !std::isfinite(t(i, j))) {
        throw Error(ErrorCode::kBadTopology,
                    "non-positive travel time on used arc " + std::to_string(i) + "->" + std::to_string(j));
      }
      net.road_lookup[static_cast<std::size_t>(i * n + j)] = static_cast<int>(net.nodes.size());
      net.nodes.push_back({NodeKind::kRoad, i, j});
    }
  }

  net.road_time = Vector::Zero(net.node_count());
  net.out.resize(net.nodes.size());
  for (int u = n; u < net.node_count(); ++u) {
    const auto& nd = net.nodes[static_cast<std::size_t>(u)];
    net.road_time(u) = t(nd.parent, nd.child);
    net.out[static_cast<std::size_t>(nd.parent)].push_back({u, routing(nd.parent, nd.child)});
    net.out[static_cast<std::size_t>(u)].push_back({nd.child, 1.0});
  }
  return net;
}

}  // namespace modnet
