#include "doctest.h"

#include "modnet/error.hpp"
#include "modnet/scenario.hpp"
#include "test_support.hpp"

#include <algorithm>

using namespace modnet;
using modnet::testing::random_scenario;
using modnet::testing::two_station;

namespace {

bool has_rule(const std::vector<Violation>& v, const std::string& rule) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.rule == rule; });
}

// Random rebalance params obeying the coupling constraint.
RebalanceParams random_params(const Scenario& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = s.size();
  RebalanceParams rp = RebalanceParams::none(n);
  Matrix beta = Matrix::Zero(n, n), alpha = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      beta(i, j) = u(rng) * s.lambda(i) * s.p(i, j);
      alpha(i, j) = u(rng);
    }
    rp.lambda_del(i) = beta.row(i).sum();
    rp.psi(i) = alpha.row(i).sum();
    rp.eta.row(i) = beta.row(i) / rp.lambda_del(i);
    rp.xi.row(i) = alpha.row(i) / rp.psi(i);
  }
  return rp;
}

}  // namespace

TEST_CASE("validate_scenario: minimal valid scenario") {
  CHECK(validate_scenario(two_station()).empty());
}

TEST_CASE("validate_scenario: row-sum defect is reported once") {
  auto s = two_station();
  s.p(0, 1) = 0.9;
  const auto v = validate_scenario(s);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rule == "row-sum");
  CHECK(v[0].row == 0);
}

TEST_CASE("validate_scenario: unreachable station breaks irreducibility") {
  Scenario s;
  s.lambda = Vector::Ones(3);
  s.p = Matrix(3, 3);
  s.p << 0, 1, 0,
         1, 0, 0,
         1, 0, 0;
  s.t = Matrix::Ones(3, 3);
  const auto v = validate_scenario(s);
  CHECK(has_rule(v, "irreducibility"));
  CHECK_FALSE(has_rule(v, "row-sum"));
}

TEST_CASE("validate_scenario: non-positive travel time and rate") {
  auto s = two_station();
  s.t(1, 0) = 0.0;
  s.lambda(0) = 0.0;
  const auto v = validate_scenario(s);
  CHECK(has_rule(v, "positive"));
  CHECK(v.size() == 2);
}

TEST_CASE("FleetConfig requires vehicles > drivers >= 0") {
  CHECK_NOTHROW((FleetConfig{5, 0}.validate()));
  CHECK_THROWS_AS((FleetConfig{3, 3}.validate()), Error);
  CHECK_THROWS_AS((FleetConfig{3, -1}.validate()), Error);
}

TEST_CASE("split_demand: no control keeps System 1 intact and flags System 2") {
  const auto s = random_scenario(4, 3);
  const auto sp = split_demand(s, RebalanceParams::none(4));
  CHECK(sp.q.isApprox(Vector::Ones(4)));
  CHECK((sp.p1 - s.p).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(sp.lambda2.isZero());
  CHECK(sp.degenerate2.size() == 4);
  CHECK(sp.degenerate1.empty());
}

TEST_CASE("split_demand: two-station hand evaluation") {
  Scenario s = two_station(2.0, 1.0);
  RebalanceParams rp = RebalanceParams::none(2);
  rp.lambda_del << 1.0, 0.0;
  rp.psi << 0.0, 1.0;
  const auto sp = split_demand(s, rp);
  CHECK(sp.q(0) == doctest::Approx(0.5));
  CHECK(sp.q(1) == doctest::Approx(1.0));
  CHECK((sp.p1 - s.p).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(sp.lambda2(0) == doctest::Approx(1.0));
  CHECK(sp.lambda2(1) == doctest::Approx(1.0));
  CHECK(sp.virtual_fraction(0) == doctest::Approx(0.0));
  CHECK(sp.virtual_fraction(1) == doctest::Approx(1.0));
  Matrix expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK((sp.p2 - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("split_demand: delegated flow above demand is infeasible") {
  Scenario s = random_scenario(3, 11);
  RebalanceParams rp = RebalanceParams::none(3);
  rp.eta.row(0) << 0.0, 1.0, 0.0;
  rp.lambda_del(0) = s.lambda(0) * s.p(0, 1) * 1.5;
  try {
    split_demand(s, rp);
    FAIL("expected InfeasibleSplit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInfeasibleSplit);
  }
}

TEST_CASE("split_demand: fully delegated station is flagged, not rejected") {
  Scenario s = two_station(1.0, 1.0);
  RebalanceParams rp = RebalanceParams::none(2);
  rp.lambda_del(0) = 1.0;
  const auto sp = split_demand(s, rp);
  REQUIRE(sp.degenerate1.size() == 1);
  CHECK(sp.degenerate1[0] == 0);
  CHECK(sp.q(0) == 0.0);
  CHECK(sp.p1(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("split_demand: reconstruction identity on random controls") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const int n = 2 + static_cast<int>(seed % 6);
    const auto s = random_scenario(n, seed);
    const auto rp = random_params(s, seed + 1000);
    const auto sp = split_demand(s, rp);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(sp.p1.row(i).sum() - 1.0) < 1e-9);
      CHECK(std::abs(sp.p2.row(i).sum() - 1.0) < 1e-9);
      CHECK(sp.p1.row(i).minCoeff() >= 0.0);
      CHECK(sp.p2.row(i).maxCoeff() <= 1.0);
      if (sp.q(i) > 0.0) {
        const Eigen::RowVectorXd rebuilt = sp.q(i) * sp.p1.row(i) + (1.0 - sp.q(i)) * rp.eta.row(i);
        CHECK((rebuilt - s.p.row(i)).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
  }
}

TEST_CASE("build_network: two stations give four nodes") {
  const auto s = two_station();
  const auto net = build_network(s.lambda, s.p, s.t, 3);
  REQUIRE(net.node_count() == 4);
  const Matrix r = net.routing_dense();
  const int road01 = net.road_index(0, 1);
  const int road10 = net.road_index(1, 0);
  CHECK(road01 == 2);
  CHECK(road10 == 3);
  CHECK(r(0, road01) == 1.0);
  CHECK(r(road01, 1) == 1.0);
  CHECK(r(1, road10) == 1.0);
  CHECK(r(road10, 0) == 1.0);
  CHECK(net.service_rate(road01, 3) == doctest::Approx(3.0));
  CHECK(net.service_rate(0, 5) == doctest::Approx(1.0));
}

TEST_CASE("build_network: full three-station routing gives N^2 nodes") {
  const auto s = random_scenario(3, 5);
  const auto net = build_network(s.lambda, s.p, s.t, 2);
  CHECK(net.node_count() == 9);
  const Matrix r = net.routing_dense();
  for (int u = 0; u < net.node_count(); ++u) CHECK(std::abs(r.row(u).sum() - 1.0) < 1e-12);
  // Ordering: stations first, then roads in (origin, destination) order.
  CHECK(net.nodes[3].parent == 0);
  CHECK(net.nodes[3].child == 1);
  CHECK(net.nodes[8].parent == 2);
  CHECK(net.nodes[8].child == 1);
}

TEST_CASE("build_network: zero-probability road is pruned") {
  Vector rates(2);
  rates << 1.0, 0.0;
  Matrix routing(2, 2);
  routing << 0, 1, 0, 0;
  Matrix t = Matrix::Ones(2, 2);
  const auto net = build_network(rates, routing, t, 1);
  CHECK(net.node_count() == 3);
  CHECK(net.road_index(1, 0) == -1);
}

TEST_CASE("build_network: non-positive travel time on a used arc") {
  auto s = two_station();
  s.t(0, 1) = 0.0;
  try {
    build_network(s.lambda, s.p, s.t, 1);
    FAIL("expected BadTopology");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadTopology);
  }
}

TEST_CASE("build_network is deterministic") {
  const auto s = random_scenario(5, 9, 0.4);
  const auto a = build_network(s.lambda, s.p, s.t, 7);
  const auto b = build_network(s.lambda, s.p, s.t, 7);
  REQUIRE(a.node_count() == b.node_count());
  for (int u = 0; u < a.node_count(); ++u) {
    CHECK(a.nodes[u].parent == b.nodes[u].parent);
    CHECK(a.nodes[u].child == b.nodes[u].child);
  }
  CHECK(a.routing_dense() == b.routing_dense());
}
