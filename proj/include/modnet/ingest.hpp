#pragma once

#include "modnet/scenario.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace modnet {

// One taxi trip. Times in seconds (pickup as epoch seconds), coordinates in
// any planar unit.
struct TripRecord {
  double pickup_time = 0.0;
  double pickup_x = 0.0, pickup_y = 0.0;
  double dropoff_x = 0.0, dropoff_y = 0.0;
  double duration = 0.0;
};

// [start, end) on pickup time. With `daily` the bounds are seconds after
// midnight (UTC) and every day is matched.
struct TimeWindow {
  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
  bool daily = false;

  bool contains(double t) const;
  void validate() const;
};

// Epoch seconds from "1700000000", "2013-05-01T10:15:00", "2013-05-01 10:15:00.5"
// or with a trailing Z. Throws kInvalidInput otherwise.
double parse_timestamp(const std::string& text);

struct ParsedTrips {
  std::vector<TripRecord> records;
  int skipped = 0;         // malformed rows
  int outside_window = 0;  // well-formed rows filtered out
};

// CSV with header pickup_ts,pickup_x,pickup_y,dropoff_x,dropoff_y,duration_s
// (any column order, extra columns ignored). Throws kIoError when the file
// cannot be read or the header lacks a column, kEmptyWindow when no record
// survives.
ParsedTrips parse_trips(const std::string& path, const TimeWindow& window);

struct Clustering {
  Eigen::MatrixX2d centroids;  // sorted by (x, y)
  std::vector<int> pickup_station;
  std::vector<int> dropoff_station;
  double inertia = 0.0;  // summed squared pickup distance to centroids
};

// k-means on pickup coordinates: k-means++ seeding, Lloyd iterations, best of
// `restarts` runs (capped at 50). Throws kTooFewPoints with fewer than k
// distinct pickup points.
Clustering cluster_stations(const std::vector<TripRecord>& trips, int k, std::uint64_t seed, int restarts = 10);

// Index of the nearest centroid, lowest index on ties.
int nearest_station(const Eigen::MatrixX2d& centroids, double x, double y);

struct EstimateConfig {
  double smoothing = 1e-3;
  double outlier_factor = 5.0;  // drop trips longer than this times their OD median
  double rate_floor = 1e-6;
};

struct Estimate {
  Scenario scenario;  // rates per minute, travel times in minutes
  int trips_used = 0;
  int outliers_dropped = 0;
  std::vector<int> floored_stations;
  int filled_pairs = 0;  // travel times taken from distance / mean speed
  std::vector<std::string> warnings;
};

// lambda_i = pickups_i / window_minutes; p from inter-station counts with
// additive smoothing and p_ii = 0; t from mean observed durations. Throws
// kDisconnectedDemand when the routing is not irreducible.
Estimate estimate_parameters(const std::vector<TripRecord>& trips, const Clustering& stations, double window_minutes,
                             const EstimateConfig& cfg = {});

}  // namespace modnet
