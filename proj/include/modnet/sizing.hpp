#pragma once

#include "modnet/scenario.hpp"

#include <string>
#include <vector>

namespace modnet {

struct SizingConfig {
  std::vector<double> ratios{1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 8.0, 10.0};
  std::vector<double> thresholds{0.85, 0.90, 0.95};
  std::vector<double> cost_ratios{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int max_drivers = 4000;  // search bound on m_d
  int step = 1;            // m_d granularity

  // Throws kInvalidInput on ratios <= 1, thresholds outside [0, 1),
  // cost ratios < 1 or a non-positive bound or step.
  void validate() const;
};

// m_v = round(ratio * m_d).
FleetConfig fleet_for_ratio(double ratio, int drivers);

struct FleetSize {
  double ratio = 0.0;
  double threshold = 0.0;
  int vehicles = 0;
  int drivers = 0;
  double min_availability = 0.0;
  // False when the +-2 confirmation scan found a failing fleet above the
  // answer (non-monotone availability near the crossing).
  bool monotone_edge = true;
  std::string error;  // set by size_fleet when the cell failed
};

// Lowest passenger availability over stations at the given fleet.
double min_passenger_availability(const Scenario& s, const RebalanceParams& rp, const FleetConfig& fleet);

// Smallest m_d on the grid {m0, m0 + step, ...} up to max_drivers (m0 the
// smallest legal m_d) whose lowest passenger availability reaches the
// threshold. Doubling, then bisection, then a +-2 step confirmation scan.
// Throws kNotReachedWithinBounds.
FleetSize min_fleet_for_threshold(const Scenario& s, const RebalanceParams& rp, double ratio, double threshold,
                                  const SizingConfig& cfg = {});

struct CostRow {
  double ratio = 0.0;
  double threshold = 0.0;
  double cost_ratio = 0.0;
  int vehicles = 0;
  int drivers = 0;
  double min_availability = 0.0;
  double total_cost = 0.0;  // m_v + c_r m_d
  bool optimal = false;
};

struct OptimalRatio {
  double threshold = 0.0;
  double cost_ratio = 0.0;
  double ratio = 0.0;
  double total_cost = 0.0;
};

struct CostTable {
  std::vector<CostRow> rows;
  std::vector<OptimalRatio> optimal;  // per (threshold, c_r), ties to the smaller ratio
};

// Failed cells (non-empty error) are skipped.
CostTable cost_curves(const std::vector<FleetSize>& sizes, const std::vector<double>& cost_ratios);

// Solves the linear rebalancing problem once, then sizes every (ratio,
// threshold) cell. Cells run on `jobs` threads; results are in
// ratio-major order regardless of scheduling.
std::vector<FleetSize> size_fleet(const Scenario& s, const SizingConfig& cfg, int jobs = 1);

}  // namespace modnet
