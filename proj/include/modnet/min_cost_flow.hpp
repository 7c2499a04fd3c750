#pragma once

#include "modnet/error.hpp"
#include "modnet/scenario.hpp"

#include <limits>
#include <vector>

namespace modnet {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct FlowArc {
  int from;
  int to;
  double cost;
  double capacity = kUnbounded;
};

// Divergence is outflow minus inflow required at each node: positive entries
// are supplies, negative entries demands.
struct FlowProblem {
  Vector divergence;
  std::vector<FlowArc> arcs;
};

struct FlowSolution {
  Vector flow;       // per arc, in problem order
  Vector potential;  // per node; reduced costs cost + p[from] - p[to] are
                     // >= 0 on arcs below capacity and <= 0 on arcs carrying flow
  double cost = 0.0;
};

// Raised when the divergences cannot be routed. `cut` lists the nodes still
// reachable from the supplies in the final residual graph: their net supply
// exceeds the capacity of the arcs leaving the set.
class InfeasibleFlow : public Error {
 public:
  InfeasibleFlow(std::vector<int> cut, double shortfall);

  const std::vector<int>& cut() const { return cut_; }
  double shortfall() const { return shortfall_; }

 private:
  std::vector<int> cut_;
  double shortfall_;
};

// Successive shortest augmenting paths with node potentials (Dijkstra on
// reduced costs). Arcs must have positive cost and nonnegative capacity.
FlowSolution solve_min_cost_flow(const FlowProblem& fp);

// Largest violation of the complementary-slackness conditions, bounds and
// conservation; zero for an exactly optimal solution.
double optimality_gap(const FlowProblem& fp, const FlowSolution& sol);

}  // namespace modnet
