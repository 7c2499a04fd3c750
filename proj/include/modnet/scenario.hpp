#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace modnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kRowSumTol = 1e-9;

// Demand model: Poisson arrivals lambda_i, destination choice p_ij and mean
// exponential travel times t_ij between N stations.
struct Scenario {
  Vector lambda;
  Matrix p;
  Matrix t;
  std::optional<Eigen::MatrixX2d> coords;
  std::string time_unit = "min";

  int size() const { return static_cast<int>(lambda.size()); }
};

struct Violation {
  std::string field;
  std::string rule;
  int row = -1;
  int col = -1;

  std::string describe() const;
};

// Returns every broken invariant; an empty list means the scenario is valid.
std::vector<Violation> validate_scenario(const Scenario& s);

// True if the directed graph on the support (entries > threshold) of a square
// matrix is strongly connected.
bool strongly_connected(const Matrix& weights, double threshold = 0.0);

struct FleetConfig {
  int vehicles = 0;
  int drivers = 0;

  int customer_fleet() const { return vehicles - drivers; }
  // Throws kInvalidInput unless vehicles > drivers >= 0.
  void validate() const;
};

// Open-loop controls: delegated-customer rate, virtual-customer rate and the
// two routing matrices used by the taxi system.
struct RebalanceParams {
  Vector lambda_del;
  Vector psi;
  Matrix eta;
  Matrix xi;

  // No delegation, no virtual customers, uniform rows for eta and xi.
  static RebalanceParams none(int n);
};

std::vector<Violation> validate_rebalance(const Scenario& s, const RebalanceParams& rp);

// Per-station rates and routing of the two parallel systems after the
// Bernoulli delegation split.
struct SplitParams {
  Vector q;
  Matrix p1;
  Vector lambda1;
  Vector lambda2;
  Vector virtual_fraction;
  Matrix p2;
  // Stations whose rate in System 1 (resp. System 2) is zero. Their rows in
  // p1 (resp. p2) are placeholders and the station is left out of the
  // system's balance constraints.
  std::vector<int> degenerate1;
  std::vector<int> degenerate2;
  // Destinations (i, j) with lambda_i p_ij > 0 that are fully delegated, so
  // p1_ij == 0 exactly on the boundary of the coupling constraint.
  std::vector<std::pair<int, int>> saturated_pairs;
};

// Throws kInvalidInput on malformed parameters and kInfeasibleSplit if the
// delegated flow exceeds the demand on some pair.
SplitParams split_demand(const Scenario& s, const RebalanceParams& rp);

enum class NodeKind { kStation, kRoad };

struct Node {
  NodeKind kind;
  int parent;  // station id for kStation, origin for kRoad
  int child;   // station id for kStation, destination for kRoad
};

struct Arc {
  int to;
  double prob;
};

// Closed Jackson network over single-server station nodes and infinite-server
// road nodes. Station nodes come first (by id), road nodes follow in
// lexicographic (origin, destination) order. Road nodes are only created for
// pairs with positive routing probability.
struct JacksonNetwork {
  int stations = 0;
  int population = 0;
  std::vector<Node> nodes;
  std::vector<std::vector<Arc>> out;
  Vector station_rate;   // per station node
  Vector road_time;      // per node; zero for station nodes
  Matrix station_routing;
  std::vector<int> road_lookup;  // stations x stations, -1 where pruned

  int node_count() const { return static_cast<int>(nodes.size()); }
  bool is_station(int node) const { return nodes[static_cast<std::size_t>(node)].kind == NodeKind::kStation; }
  // Service rate at occupancy n (n >= 1).
  double service_rate(int node, int n) const;
  // Index of road node (i, j), or -1 if pruned.
  int road_index(int i, int j) const;
  Matrix routing_dense() const;
};

JacksonNetwork build_network(const Vector& rates, const Matrix& routing, const Matrix& t,
                             int population);

}  // namespace modnet
