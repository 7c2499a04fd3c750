#pragma once

#include "modnet/assignment.hpp"
#include "modnet/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace modnet {

enum class SimMode { kLoss, kQueueing };
enum class TravelModel { kExponential, kDeterministic };

SimMode parse_sim_mode(const std::string& name);
TravelModel parse_travel_model(const std::string& name);
std::string to_string(SimMode mode);
std::string to_string(TravelModel travel);

// Time-stepped simulation settings. Times (dt, travel times) are in the
// scenario's time unit; horizon and warmup count steps. Replica r uses seed
// `seed + r`.
struct SimConfig {
  SimMode mode = SimMode::kLoss;
  Scenario scenario;
  FleetConfig fleet;
  // Loss mode: delegation and virtual-customer controls.
  RebalanceParams rebalance;
  // Queueing mode: assignment weight, driver rebalancing period (steps),
  // boardings per station per step and the wait-time bin width (steps).
  double w = 1.0;
  int rebalance_period = 60;
  int boardings_per_step = 1;
  int sample_every = 150;
  double dt = 1.0;
  int horizon = 50000;
  int warmup = -1;  // negative: horizon / 3
  int replicas = 10;
  std::uint64_t seed = 0;
  TravelModel travel = TravelModel::kExponential;
  int jobs = 1;

  int warmup_steps() const { return warmup < 0 ? horizon / 3 : warmup; }
  // Throws kInvalidInput on a malformed configuration.
  void validate() const;
};

// Counts over the post-warmup window of one replica.
struct ReplicaCounts {
  Vector arrivals;  // real customers per station
  Vector served;
  Vector arrivals1, served1;  // delegated to the customer-driven system
  Vector arrivals2, served2;  // delegated to the taxi system
  Vector virtual_arrivals, virtual_served;
  double assigned = 0.0;            // queueing mode: customers given a vehicle
  double rebalancing_trips = 0.0;  // virtual customers served or drivers dispatched
  Vector wait_total;               // queueing mode: summed waits of boarded customers
  Vector boarded;
  long invariant_violations = 0;
};

struct SimMetrics {
  SimMode mode = SimMode::kLoss;
  std::vector<ReplicaCounts> replicas;

  // Loss mode, replicas x stations: served / arrivals (0 where no arrivals).
  Matrix availability;
  Matrix availability1;
  Matrix availability2;
  Vector mean_availability;
  Vector std_availability;  // sample std across replicas

  // Queueing mode. Bin b covers steps [b * sample_every, (b + 1) * sample_every);
  // only post-warmup bins are kept. wait[r](b, i) is the mean wait of
  // customers boarding at i during the bin, NaN when nobody boarded.
  Vector bin_time;  // bin midpoints in scenario time units
  std::vector<Matrix> wait;
  Matrix mean_wait;  // mean over replicas with data, 0 when none
  Matrix std_wait;
  Matrix wait_samples;  // replicas contributing to each bin
  Vector station_mean_wait;  // total wait / boardings over all replicas
  int worst_station = -1;
  // Per-replica least-squares slope of the worst station's series over the
  // final third of the horizon, and the 95% t interval of their mean.
  Vector slope;
  double slope_mean = 0.0;
  double slope_low = 0.0;
  double slope_high = 0.0;

  double arrivals = 0.0;
  double served = 0.0;
  double lost = 0.0;
  double assigned = 0.0;
  double rebalancing_trips = 0.0;
  long invariant_violations = 0;
  std::vector<std::string> warnings;
};

SimMetrics run_loss_sim(const SimConfig& cfg);
SimMetrics run_queueing_sim(const SimConfig& cfg);
SimMetrics run_simulation(const SimConfig& cfg);

// Splits `total` in proportion to nonnegative weights; remainders go to the
// largest fractional parts, ties to the lower index.
IntVector apportion(int total, const Vector& weights);

struct DispatchOrder {
  int from;
  int to;
  int count;
};

// Integral min-cost-flow dispatch of idle drivers (state.d_u) towards
// `target` (same total) with costs t_ij. Orders come out sorted by (from, to).
std::vector<DispatchOrder> rebalance_drivers_step(const StationState& state, const IntVector& target,
                                                  const Matrix& t);

// Two-sided 95% quantile of Student's t with `df` degrees of freedom.
double student_t95(int df);

}  // namespace modnet
