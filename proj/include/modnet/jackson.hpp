#pragma once

#include "modnet/scenario.hpp"

#include <cstddef>
#include <vector>

namespace modnet {

// Relative throughput of every node, scaled so the largest station value is
// 1. Station values are the stationary vector of the station-level routing
// chain (road nodes folded out); road node (i, j) gets pi_i * r_ij. Stations
// outside the unique closed class get 0. Throws kSingularChain when the
// station chain has more than one closed class.
Vector relative_throughput(const JacksonNetwork& net);

// gamma_i = pi_i / mu_i(1). Throws kZeroRate for a zero-rate station that
// carries positive relative throughput.
Vector relative_utilization(const JacksonNetwork& net, const Vector& pi);

// G(0..m) by convolution. The road nodes are merged into one delay term
// (sum of their utilizations)^k / k!, then each station is folded in with
// G(k) += gamma_i G(k-1). If any value leaves [1e-280, 1e280] the whole
// computation is redone in log space and `overflowed` is set; `log_g` is
// always valid.
struct NormalizationConstants {
  std::vector<double> g;
  std::vector<double> log_g;
  bool overflowed = false;

  int max_population() const { return static_cast<int>(log_g.size()) - 1; }
  // G(k-1) / G(k) for k >= 1.
  double ratio(int k) const;
};

NormalizationConstants normalization_constants(const JacksonNetwork& net, const Vector& pi, int m);

struct ThroughputAvailability {
  Vector throughput;    // per node
  Vector availability;  // per station
};

ThroughputAvailability throughput_and_availability(const JacksonNetwork& net, const Vector& pi,
                                                   const Vector& gamma, const NormalizationConstants& g,
                                                   int m);

// Exact mean value analysis. Row k-1 of each matrix holds population k.
// Road nodes are pure delays (wait = mean travel time).
struct MvaResult {
  Matrix wait;          // populations x nodes
  Matrix queue_length;  // populations x nodes
  Matrix throughput;    // populations x nodes
  Matrix availability;  // populations x stations
};

MvaResult mva(const JacksonNetwork& net, int m);

// Station availabilities at population m only, with all road nodes lumped
// into a single delay. Used inside optimization loops.
Vector mva_availability(const JacksonNetwork& net, const Vector& pi, int m);

// Same recursion on raw inputs: per-station service demands (pi / mu, any
// common scale) and one delay node of total demand `delay` on that scale.
Vector station_delay_availability(const Vector& demand, double delay, int m);

struct AnalysisResult {
  Vector pi;
  Vector gamma;
  NormalizationConstants g;
  Vector throughput;
  Vector availability;
  Vector queue_length;
  Vector wait;
};

AnalysisResult analyze(const JacksonNetwork& net);

// Product-form probability of one occupancy vector.
double product_form_probability(const JacksonNetwork& net, const Vector& pi, const NormalizationConstants& g,
                                const std::vector<int>& occupancy);

struct CtmcDistribution {
  std::vector<std::vector<int>> states;
  Vector probability;
};

inline constexpr std::size_t kDefaultCtmcStateCap = 200000;

// Stationary distribution of the network's continuous-time Markov chain by
// solving global balance directly; independent of the product form.
CtmcDistribution ctmc_oracle(const JacksonNetwork& net, int m, std::size_t state_cap = kDefaultCtmcStateCap);

}  // namespace modnet
