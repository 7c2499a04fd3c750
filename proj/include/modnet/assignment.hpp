#pragma once

#include "modnet/scenario.hpp"

namespace modnet {

using IntVector = Eigen::VectorXi;
using IntMatrix = Eigen::MatrixXi;

// Snapshot of the closed-loop system seen by the assignment step.
// v_t(j, i) and v_a(j, i) count customer-driven vehicles headed from j to
// i (in transit, and assigned but still parked at j). Assigned vehicles are
// committed: they are not part of v_e.
struct StationState {
  IntVector v_e;  // excess unassigned customer-driven vehicles
  IntVector d_u;  // unassigned drivers
  IntMatrix c_u;  // unassigned customers i -> j
  IntMatrix v_t;
  IntMatrix v_a;

  static StationState empty(int n);
  int size() const { return static_cast<int>(v_e.size()); }
  // Throws kInvalidInput on shape mismatch, negative counts or c_u(i, i) > 0.
  void validate() const;
};

struct AssignmentProblem {
  StationState state;
  Vector v_des;  // desired customer-driven vehicles per station
  double w = 1.0;
  // v+ at the all-zero assignment: v_e_i + sum_j (v_a(j, i) + v_t(j, i)).
  Vector base;

  // v+_i = base_i + sum_j n_v(j, i) - sum_j n_v(i, j).
  Vector predicted(const IntMatrix& n_v) const;
  double objective(const IntMatrix& n_v, const IntMatrix& n_d) const;
  bool feasible(const IntMatrix& n_v, const IntMatrix& n_d) const;
  // 2 N^2 assignment variables plus N slacks.
  int formulation_variables() const;
};

// v_des_i = (m_v - m_d) lambda_i / sum(lambda).
AssignmentProblem build_problem(const StationState& state, const FleetConfig& fleet, const Vector& lambda, double w);

struct AssignmentSolution {
  IntMatrix n_v;
  IntMatrix n_d;
  double objective = 0.0;
  double bound = 0.0;  // best bound at exit; equals objective
  int nodes = 0;
  int lp_iterations = 0;
};

// Exact solve by branch-and-bound over LP relaxations (best bound first,
// most fractional branching, index tie-breaks). Among optima n_d is the
// lexicographically smallest completion of the n_v found; n_v itself is
// whichever optimum the deterministic search reaches first.
AssignmentSolution solve_assignment(const AssignmentProblem& ap);

}  // namespace modnet
