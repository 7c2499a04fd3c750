#pragma once

#include "modnet/rebalance_lp.hpp"
#include "modnet/scenario.hpp"

#include <optional>
#include <string>
#include <vector>

namespace modnet {

struct MmrpConfig {
  double c = 1.0;
  FleetConfig fleet{2, 1};
  std::optional<RebalanceParams> initial;  // MRP solution when empty
  int max_iterations = 400;                // accepted descent steps
  double eps_feas = 1e-6;
  double eps_a = 1e-3;
  double fd_step = 1e-6;
  // For c > 0, reject steps whose A* falls more than eps_a below the start.
  bool dominance = true;
};

struct MmrpStep {
  int iteration = 0;
  double objective = 0.0;
  double a_star = 0.0;
  double step = 0.0;
  double stationarity = 0.0;      // max |projected reduced gradient|
  double balance_residual = 0.0;  // relative spread of System 1 utilizations
  double availability_gap = 0.0;  // max - min passenger availability
};

struct MmrpResult {
  RebalanceParams params;
  Matrix beta;   // lambda_del * eta
  Matrix alpha;  // psi * xi
  double a_star = 0.0;
  double objective = 0.0;
  double rebalancing_cost = 0.0;  // sum T xi psi
  Vector availability_passenger;
  double balance_residual = 0.0;
  double availability_gap = 0.0;
  double coupling_residual = 0.0;
  // First feasible point, reached from the initial controls.
  double start_objective = 0.0;
  double start_a_star = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;  // "converged", "NoProgress" or "IterationLimit"
  std::vector<MmrpStep> trace;
  // The taxi-system term is evaluated at population m_d.
  std::string note = "taxi availability term evaluated at m_d";
};

MmrpResult solve_mmrp(const Scenario& s, const MmrpConfig& cfg);

struct ParetoPoint {
  double c = 0.0;
  double rebalancing_cost = 0.0;
  double a_star = 0.0;
  double availability_gap = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;
  RebalanceParams params;
  bool neighbour_start = false;  // re-solved from an adjacent weight's solution
  std::string error;             // empty unless the solve threw
};

// One solve per weight (in parallel), then an ascending and a descending
// pass that re-solves a weight from its neighbour's solution whenever that
// solution has a lower objective at this weight. `base` supplies fleet and
// tolerances; results do not depend on `jobs`.
std::vector<ParetoPoint> pareto_sweep(const Scenario& s, const MmrpConfig& base, const std::vector<double>& c_list,
                                      int jobs = 1);

// The MMRP on flow variables beta = lambda_del * eta and alpha = psi * xi.
// Variables: beta on every arc with positive demand (row-major), then
// alpha on every off-diagonal pair (row-major).
class MmrpModel {
 public:
  MmrpModel(const Scenario& s, const FleetConfig& fleet, double c);

  int size() const { return static_cast<int>(lower_.size()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  Vector project(const Vector& x) const;

  Vector pack(const Matrix& beta, const Matrix& alpha) const;
  void unpack(const Vector& x, Matrix& beta, Matrix& alpha) const;

  struct Eval {
    double objective = 0.0;    // cost - c * taxi_total
    double cost = 0.0;         // sum T alpha
    double taxi_total = 0.0;   // sum of taxi availabilities
    Vector residuals;          // gamma1_i / gamma1_0 - 1, then A_pass_i - A_pass_0, i >= 1
    Vector availability_passenger;
    Vector availability1;
    Vector availability2;
  };
  Eval evaluate(const Vector& x) const;

  // Objective gradient and residual Jacobian. Derivatives through MVA are
  // central differences in the per-system utilizations and delay; the
  // dependence of those on the flows is differentiated exactly.
  struct Linearization {
    Eval eval;
    Vector gradient;
    Matrix jacobian;  // residual_count() x size()
  };
  Linearization linearize(const Vector& x, double fd_step) const;

  // Augmented-Lagrangian merit f + mu.h + rho/2 |h|^2 and its gradient.
  double merit(const Vector& x, const Vector& multipliers, double rho) const;
  Vector merit_gradient(const Vector& x, const Vector& multipliers, double rho, double fd_step) const;

  int residual_count() const { return 2 * (n_ - 1); }

 private:
  struct SystemState;
  SystemState system(const Matrix& flow, int population) const;

  const Scenario& s_;
  int n_;
  int m1_;
  int m2_;
  double c_;
  std::vector<std::pair<int, int>> beta_arcs_;
  std::vector<std::pair<int, int>> alpha_arcs_;
  Vector lower_;
  Vector upper_;
};

}  // namespace modnet
