#include "modnet/rebalance_lp.hpp"

#include "modnet/error.hpp"

#include <cmath>

namespace modnet {

Vector demand_imbalance(const Scenario& s) {
  // lambda_i - sum_j lambda_j p_ji
  return s.lambda - s.p.transpose() * s.lambda;
}

FlowProblem delegated_flow_problem(const Scenario& s) {
  const int n = s.size();
  FlowProblem fp;
  fp.divergence = demand_imbalance(s);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double cap = s.lambda(i) * s.p(i, j);
      if (i != j && cap > 0.0) fp.arcs.push_back({i, j, s.t(i, j), cap});
    }
  }
  return fp;
}

FlowProblem virtual_flow_problem(const Scenario& s) {
  const int n = s.size();
  FlowProblem fp;
  fp.divergence = -demand_imbalance(s);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) fp.arcs.push_back({i, j, s.t(i, j)});
    }
  }
  return fp;
}

void flows_to_controls(const Matrix& flow, Vector& rate, Matrix& routing) {
  const auto n = flow.rows();
  rate = flow.rowwise().sum();
  routing = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rate(i) > 0.0) {
      routing.row(i) = flow.row(i) / rate(i);
    } else {
      rate(i) = 0.0;
      routing.row(i).setConstant(1.0 / static_cast<double>(n - 1));
    }
    routing(i, i) = 0.0;
  }
}

namespace {

Matrix flow_matrix(const FlowProblem& fp, const FlowSolution& sol, int n) {
  Matrix m = Matrix::Zero(n, n);
  double scale = 0.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(fp.divergence(i)));
  for (std::size_t k = 0; k < fp.arcs.size(); ++k) {
    const double f = sol.flow(static_cast<Eigen::Index>(k));
    // Cancelled augmentations can leave round-off residue on an arc.
    if (f > 1e-13 * std::max(1.0, scale)) m(fp.arcs[k].from, fp.arcs[k].to) = f;
  }
  return m;
}

}  // namespace

MrpSolution solve_mrp(const Scenario& s) {
  const auto problems = validate_scenario(s);
  if (!problems.empty()) throw Error(ErrorCode::kInvalidInput, "invalid scenario: " + problems.front().describe());
  const int n = s.size();

  MrpSolution out;
  const auto beta_problem = delegated_flow_problem(s);
  const auto alpha_problem = virtual_flow_problem(s);
  // Both instances are feasible for every valid scenario; an InfeasibleFlow
  // here means the input broke an invariant.
  out.beta_flow = solve_min_cost_flow(beta_problem);
  out.alpha_flow = solve_min_cost_flow(alpha_problem);
  out.beta = flow_matrix(beta_problem, out.beta_flow, n);
  out.alpha = flow_matrix(alpha_problem, out.alpha_flow, n);
  out.beta_cost = (s.t.array() * out.beta.array()).sum();
  out.alpha_cost = (s.t.array() * out.alpha.array()).sum();

  flows_to_controls(out.beta, out.params.lambda_del, out.params.eta);
  flows_to_controls(out.alpha, out.params.psi, out.params.xi);
  // Guard the coupling constraint against round-off in lambda_del * eta.
  for (int i = 0; i < n; ++i) out.params.lambda_del(i) = std::min(out.params.lambda_del(i), s.lambda(i));
  return out;
}

SystemModel customer_system(const Scenario& s, const SplitParams& sp, int population) {
  SystemModel m{build_network(sp.lambda1, sp.p1, s.t, population), {}, false};
  m.active = (sp.lambda1.array() > 0.0).any();
  if (m.active) m.pi = relative_throughput(m.net);
  return m;
}

SystemModel taxi_system(const Scenario& s, const SplitParams& sp, int population) {
  SystemModel m{build_network(sp.lambda2, sp.p2, s.t, population), {}, false};
  m.active = (sp.lambda2.array() > 0.0).any();
  if (m.active) m.pi = relative_throughput(m.net);
  return m;
}

Vector system_availability(const SystemModel& sys, int population) {
  if (!sys.active || population <= 0) return Vector::Zero(sys.net.stations);
  try {
    return mva_availability(sys.net, sys.pi, population);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kZeroRate) throw Error(ErrorCode::kDegenerateStation, e.what());
    throw;
  }
}

PassengerMetrics passenger_availability(const Scenario& s, const FleetConfig& fleet, const RebalanceParams& rp) {
  return passenger_availability(s, fleet, rp, split_demand(s, rp));
}

PassengerMetrics passenger_availability(const Scenario& s, const FleetConfig& fleet, const RebalanceParams& rp,
                                        const SplitParams& sp) {
  fleet.validate();
  const int n = s.size();
  const int m1 = fleet.customer_fleet();
  const int m2 = fleet.drivers;

  PassengerMetrics pm;
  pm.q = sp.q;
  pm.availability1 = system_availability(customer_system(s, sp, m1), m1);
  pm.availability2 = system_availability(taxi_system(s, sp, m2), m2);
  pm.throughput_total.resize(n);
  pm.throughput_passenger.resize(n);
  pm.availability_passenger.resize(n);
  for (int i = 0; i < n; ++i) {
    const double thr1 = pm.availability1(i) * sp.lambda1(i);
    const double thr2 = pm.availability2(i) * sp.lambda2(i);
    pm.throughput_total(i) = thr1 + thr2;
    const double real_share = sp.lambda2(i) > 0.0 ? rp.lambda_del(i) / sp.lambda2(i) : 0.0;
    pm.throughput_passenger(i) = thr1 + real_share * thr2;
    pm.availability_passenger(i) = pm.throughput_passenger(i) / s.lambda(i);
  }
  return pm;
}

}  // namespace modnet
