#pragma once

#include "modnet/jackson.hpp"
#include "modnet/min_cost_flow.hpp"
#include "modnet/scenario.hpp"

namespace modnet {

// Solution of the approximate rebalancing problem: the open-loop controls
// plus the two optimal flows they were built from. beta carries the
// delegated (taxi) customer flow, alpha the virtual-customer flow.
struct MrpSolution {
  RebalanceParams params;
  Matrix beta;
  Matrix alpha;
  double beta_cost = 0.0;
  double alpha_cost = 0.0;
  FlowSolution beta_flow;
  FlowSolution alpha_flow;
};

// lambda_i - sum_j lambda_j p_ji: surplus of departures over arrivals.
Vector demand_imbalance(const Scenario& s);

// Capacitated instance: arcs i->j with cost t_ij and capacity lambda_i p_ij
// (arcs with zero demand are omitted), divergence = demand_imbalance.
FlowProblem delegated_flow_problem(const Scenario& s);
// Uncapacitated instance on all i != j with divergence = -demand_imbalance.
FlowProblem virtual_flow_problem(const Scenario& s);

// Turns per-pair flows into controls: rate = row sum, routing = row / rate,
// or uniform 1/(N-1) off the diagonal when the rate is zero.
void flows_to_controls(const Matrix& flow, Vector& rate, Matrix& routing);

MrpSolution solve_mrp(const Scenario& s);

// Per-system analysis pieces shared by the passenger metrics, sizing and
// the nonlinear solver.
struct SystemModel {
  JacksonNetwork net;
  Vector pi;
  bool active = false;  // false when no station has a positive rate
};

// System 1 (customer-driven) network at population m from a split.
SystemModel customer_system(const Scenario& s, const SplitParams& sp, int population);
// System 2 (taxi) network at population m from a split.
SystemModel taxi_system(const Scenario& s, const SplitParams& sp, int population);

// Station availabilities of one system by exact MVA. Zero everywhere when
// the system is inactive or empty. Throws kDegenerateStation if vehicles
// would be trapped at a station with zero rate.
Vector system_availability(const SystemModel& sys, int population);

struct PassengerMetrics {
  Vector throughput_total;
  Vector throughput_passenger;
  Vector availability_passenger;
  Vector availability1;
  Vector availability2;
  Vector q;
};

PassengerMetrics passenger_availability(const Scenario& s, const FleetConfig& fleet, const RebalanceParams& rp);

// Same, reusing a split and per-system models; populations are taken from
// the fleet.
PassengerMetrics passenger_availability(const Scenario& s, const FleetConfig& fleet, const RebalanceParams& rp,
                                        const SplitParams& sp);

}  // namespace modnet
