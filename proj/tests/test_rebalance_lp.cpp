#include "doctest.h"

#include "modnet/jackson.hpp"
#include "modnet/rebalance_lp.hpp"
#include "test_support.hpp"

#include <random>

using namespace modnet;
using modnet::testing::random_scenario;
using modnet::testing::two_station;

namespace {

// SS part of gamma for one system, recomputed through the Jackson network.
Vector station_gamma(const Vector& rates, const Matrix& routing, const Matrix& t) {
  const auto net = build_network(rates, routing, t, 1);
  const Vector pi = relative_throughput(net);
  return relative_utilization(net, pi).head(net.stations);
}

double relative_spread(const Vector& v) {
  return (v.maxCoeff() - v.minCoeff()) / v.cwiseAbs().maxCoeff();
}

// Independent check of gamma constancy: with constant gamma the rates
// themselves are invariant under the routing, lambda = routing^T lambda.
double stationarity_residual(const Vector& rates, const Matrix& routing) {
  return (rates - routing.transpose() * rates).cwiseAbs().maxCoeff() / rates.cwiseAbs().maxCoeff();
}

Matrix to_matrix(const FlowProblem& fp, const FlowSolution& sol, int n) {
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < fp.arcs.size(); ++k) m(fp.arcs[k].from, fp.arcs[k].to) = sol.flow(static_cast<Eigen::Index>(k));
  return m;
}

// A feasible (generally non-optimal) flow: optimal for random arc costs.
Matrix random_feasible_flow(FlowProblem fp, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (auto& arc : fp.arcs) arc.cost = u(rng);
  return to_matrix(fp, solve_min_cost_flow(fp), n);
}

double conservation_residual(const Matrix& flow, const Vector& divergence) {
  const Vector net = flow.rowwise().sum() - flow.colwise().sum().transpose();
  return (net - divergence).cwiseAbs().maxCoeff();
}

Scenario doubly_balanced(int n, std::uint64_t seed) {
  auto s = random_scenario(n, seed);
  s.lambda.setConstant(1.3);
  // Half "next" and half "previous" keeps every column sum at 1.
  s.p.setZero();
  for (int i = 0; i < n; ++i) {
    s.p(i, (i + 1) % n) += 0.5;
    s.p(i, (i + n - 1) % n) += 0.5;
  }
  return s;
}

}  // namespace

TEST_CASE("solve_mrp: balanced scenario needs no rebalancing") {
  const auto s = doubly_balanced(4, 1);
  const auto sol = solve_mrp(s);
  CHECK(sol.beta.isZero());
  CHECK(sol.alpha.isZero());
  CHECK(sol.params.lambda_del.isZero());
  CHECK(sol.params.psi.isZero());
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) CHECK(sol.params.eta(i, j) == (i == j ? 0.0 : 1.0 / 3.0));
  }
}

TEST_CASE("solve_mrp: two-station hand solution") {
  const auto s = two_station(2.0, 1.0);
  const auto sol = solve_mrp(s);
  CHECK(sol.beta(0, 1) == doctest::Approx(1.0));
  CHECK(sol.beta(1, 0) == 0.0);
  CHECK(sol.alpha(1, 0) == doctest::Approx(1.0));
  CHECK(sol.alpha(0, 1) == 0.0);
  CHECK(sol.params.lambda_del(0) == doctest::Approx(1.0));
  CHECK(sol.params.lambda_del(1) == 0.0);
  CHECK(sol.params.psi(0) == 0.0);
  CHECK(sol.params.psi(1) == doctest::Approx(1.0));
  CHECK(sol.params.eta(0, 1) == 1.0);
  CHECK(sol.params.xi(1, 0) == 1.0);
  CHECK(sol.beta_cost == doctest::Approx(1.0));
}

TEST_CASE("solve_mrp: both systems balanced on random scenarios") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int n = 5 + static_cast<int>(seed % 16);
    const auto s = random_scenario(n, seed, seed % 2 ? 0.5 : 0.0);
    const auto sol = solve_mrp(s);
    CHECK(validate_rebalance(s, sol.params).empty());
    const auto sp = split_demand(s, sol.params);
    CHECK(relative_spread(station_gamma(sp.lambda1, sp.p1, s.t)) < 1e-9);
    CHECK(stationarity_residual(sp.lambda1, sp.p1) < 1e-9);
    REQUIRE(sp.degenerate2.empty());
    CHECK(relative_spread(station_gamma(sp.lambda2, sp.p2, s.t)) < 1e-9);
    CHECK(stationarity_residual(sp.lambda2, sp.p2) < 1e-9);
  }
}

TEST_CASE("solve_mrp: flow conservation and objective alignment") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const int n = 8;
    const auto s = random_scenario(n, seed);
    const auto sol = solve_mrp(s);
    const Vector d = demand_imbalance(s);
    CHECK(conservation_residual(sol.beta, d) < 1e-9);
    CHECK(conservation_residual(sol.alpha, -d) < 1e-9);
    double virtual_cost = 0.0, total_cost = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double xi_term = s.t(i, j) * sol.params.xi(i, j) * sol.params.psi(i);
        virtual_cost += xi_term;
        total_cost += xi_term + s.t(i, j) * sol.params.eta(i, j) * sol.params.lambda_del(i);
        CHECK(sol.beta(i, j) <= s.lambda(i) * s.p(i, j) + 1e-12);
      }
    }
    CHECK(virtual_cost == doctest::Approx(sol.alpha_cost).epsilon(1e-12));
    CHECK(total_cost == doctest::Approx(sol.alpha_cost + sol.beta_cost).epsilon(1e-12));
    CHECK(optimality_gap(delegated_flow_problem(s), sol.beta_flow) < 1e-9);
    CHECK(optimality_gap(virtual_flow_problem(s), sol.alpha_flow) < 1e-9);
  }
}

TEST_CASE("any balanced delegated flow equalizes System 1") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const int n = 4 + static_cast<int>(seed % 5);
    const auto s = random_scenario(n, seed + 300);
    const auto fp = delegated_flow_problem(s);
    const Matrix b1 = random_feasible_flow(fp, n, rng);
    const Matrix b2 = random_feasible_flow(fp, n, rng);
    const double w = u(rng);
    const Matrix beta = w * b1 + (1.0 - w) * b2;
    CHECK(conservation_residual(beta, demand_imbalance(s)) < 1e-9);
    RebalanceParams rp = RebalanceParams::none(n);
    flows_to_controls(beta, rp.lambda_del, rp.eta);
    rp.lambda_del = rp.lambda_del.cwiseMin(s.lambda);
    const auto sp = split_demand(s, rp);
    if (!sp.degenerate1.empty()) continue;
    CHECK(relative_spread(station_gamma(sp.lambda1, sp.p1, s.t)) < 1e-9);
  }
}

TEST_CASE("any balanced virtual flow equalizes System 2") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const int n = 4 + static_cast<int>(seed % 5);
    const auto s = random_scenario(n, seed + 400);
    const Matrix beta = random_feasible_flow(delegated_flow_problem(s), n, rng);
    const auto vp = virtual_flow_problem(s);
    const double w = u(rng);
    const Matrix alpha = w * random_feasible_flow(vp, n, rng) + (1.0 - w) * random_feasible_flow(vp, n, rng);
    RebalanceParams rp = RebalanceParams::none(n);
    flows_to_controls(beta, rp.lambda_del, rp.eta);
    flows_to_controls(alpha, rp.psi, rp.xi);
    rp.lambda_del = rp.lambda_del.cwiseMin(s.lambda);
    const auto sp = split_demand(s, rp);
    if (!sp.degenerate2.empty()) continue;
    CHECK(relative_spread(station_gamma(sp.lambda2, sp.p2, s.t)) < 1e-9);
  }
}

TEST_CASE("taxi-system utilization identity holds for arbitrary controls") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 3 + rep % 6;
    const auto s = random_scenario(n, 500 + static_cast<std::uint64_t>(rep));
    RebalanceParams rp = RebalanceParams::none(n);
    for (int i = 0; i < n; ++i) {
      double row_del = 0.0, row_psi = 0.0;
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        rp.eta(i, j) = u(rng) * s.lambda(i) * s.p(i, j);
        rp.xi(i, j) = u(rng);
        row_del += rp.eta(i, j);
        row_psi += rp.xi(i, j);
      }
      rp.lambda_del(i) = row_del;
      rp.psi(i) = 2.0 * u(rng);
      rp.eta.row(i) /= row_del;
      rp.xi.row(i) /= row_psi;
    }
    const auto sp = split_demand(s, rp);
    const Vector g = station_gamma(sp.lambda2, sp.p2, s.t);
    for (int i = 0; i < n; ++i) {
      double rhs = 0.0;
      for (int j = 0; j < n; ++j) rhs += g(j) * (rp.psi(j) * rp.xi(j, i) + rp.lambda_del(j) * rp.eta(j, i));
      CHECK(std::abs((rp.lambda_del(i) + rp.psi(i)) * g(i) - rhs) < 1e-9);
    }
  }
}

TEST_CASE("passenger_availability: no drivers collapses to System 1") {
  const auto s = random_scenario(4, 17);
  const auto pm = passenger_availability(s, FleetConfig{12, 0}, RebalanceParams::none(4));
  const auto net = build_network(s.lambda, s.p, s.t, 12);
  const auto res = mva(net, 12);
  for (int i = 0; i < 4; ++i) {
    CHECK(pm.availability_passenger(i) == doctest::Approx(res.availability(11, i)).epsilon(1e-10));
    CHECK(pm.availability2(i) == 0.0);
  }
}

TEST_CASE("passenger_availability: equal delegation on a balanced scenario") {
  const int n = 5;
  const auto s = doubly_balanced(n, 3);
  RebalanceParams rp = RebalanceParams::none(n);
  rp.lambda_del = 0.3 * s.lambda;
  rp.eta = s.p;
  const auto pm = passenger_availability(s, FleetConfig{30, 8}, rp);
  CHECK(pm.q.isApprox(Vector::Constant(n, 0.7)));
  CHECK(relative_spread(pm.availability_passenger) < 1e-9);
}

TEST_CASE("passenger_availability: identity and bounds on MRP solutions") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const int n = 5;
    const auto s = random_scenario(n, seed + 40);
    const auto sol = solve_mrp(s);
    const FleetConfig fleet{40, 10};
    const auto pm = passenger_availability(s, fleet, sol.params);
    const auto sp = split_demand(s, sol.params);
    // Oracle: both systems analyzed from scratch through the convolution route.
    const auto net1 = build_network(sp.lambda1, sp.p1, s.t, 30);
    const auto net2 = build_network(sp.lambda2, sp.p2, s.t, 10);
    const auto a1 = analyze(net1).availability;
    const auto a2 = analyze(net2).availability;
    for (int i = 0; i < n; ++i) {
      CHECK(pm.availability1(i) == doctest::Approx(a1(i)).epsilon(1e-8));
      CHECK(pm.availability2(i) == doctest::Approx(a2(i)).epsilon(1e-8));
      const double expected = a1(i) * sp.q(i) + a2(i) * (1.0 - sp.q(i));
      CHECK(pm.availability_passenger(i) == doctest::Approx(expected).epsilon(1e-8));
      CHECK(pm.availability_passenger(i) >= 0.0);
      CHECK(pm.availability_passenger(i) <= 1.0);
    }
  }
}

TEST_CASE("solve_mrp rejects invalid scenarios") {
  auto s = two_station();
  s.p(0, 1) = 0.5;
  try {
    solve_mrp(s);
    FAIL("expected InvalidInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidInput);
  }
}
