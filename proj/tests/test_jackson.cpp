#include "doctest.h"

#include "modnet/error.hpp"
#include "modnet/jackson.hpp"
#include "test_support.hpp"

#include <cmath>
#include <functional>

using namespace modnet;
using modnet::testing::random_scenario;
using modnet::testing::two_station;

namespace {

JacksonNetwork net_of(const Scenario& s, int m) { return build_network(s.lambda, s.p, s.t, m); }

// Sum of unnormalized product-form weights over all occupancy vectors with
// total k, by brute-force enumeration.
double enumerate_g(const JacksonNetwork& net, const Vector& pi, int k) {
  const int nodes = net.node_count();
  std::vector<int> x(static_cast<std::size_t>(nodes), 0);
  double total = 0.0;
  std::function<void(int, int)> rec = [&](int u, int left) {
    if (u == nodes - 1) {
      x[static_cast<std::size_t>(u)] = left;
      double w = 1.0;
      for (int v = 0; v < nodes; ++v) {
        for (int n = 1; n <= x[static_cast<std::size_t>(v)]; ++n) w *= pi(v) / net.service_rate(v, n);
      }
      total += w;
      return;
    }
    for (int c = 0; c <= left; ++c) {
      x[static_cast<std::size_t>(u)] = c;
      rec(u + 1, left - c);
    }
  };
  rec(0, k);
  return total;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Station chain with unequal relative utilizations.
Scenario unbalanced_five(std::uint64_t seed) { return random_scenario(5, seed); }

}  // namespace

TEST_CASE("relative_throughput: symmetric pair") {
  const auto net = net_of(two_station(), 1);
  const Vector pi = relative_throughput(net);
  CHECK(pi.isApprox(Vector::Ones(4)));
}

TEST_CASE("relative_throughput: three-station ring is uniform") {
  Scenario s;
  s.lambda = Vector::Ones(3);
  s.p = Matrix::Zero(3, 3);
  s.p(0, 1) = s.p(1, 2) = s.p(2, 0) = 1.0;
  s.t = Matrix::Ones(3, 3);
  const Vector pi = relative_throughput(net_of(s, 1));
  REQUIRE(pi.size() == 6);
  CHECK((pi.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("relative_throughput: matches power iteration on a periodic chain") {
  Scenario s;
  s.lambda = Vector::Ones(3);
  s.p = Matrix(3, 3);
  s.p << 0, 0.7, 0.3,
         1, 0, 0,
         1, 0, 0;
  s.t = Matrix::Ones(3, 3);
  const auto net = net_of(s, 1);
  const Vector pi = relative_throughput(net);

  // Lazy chain (I + P)/2 shares the stationary vector and is aperiodic.
  const Matrix lazy = 0.5 * (Matrix::Identity(3, 3) + s.p);
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(3, 1.0 / 3.0);
  for (int it = 0; it < 2000; ++it) v = v * lazy;
  v /= v.maxCoeff();
  for (int i = 0; i < 3; ++i) CHECK(pi(i) == doctest::Approx(v(i)).epsilon(1e-12));
  CHECK(pi(net.road_index(0, 1)) == doctest::Approx(0.7 * pi(0)));
}

TEST_CASE("relative_throughput: two closed classes are rejected") {
  Vector rates = Vector::Ones(4);
  Matrix p = Matrix::Zero(4, 4);
  p(0, 1) = p(1, 0) = p(2, 3) = p(3, 2) = 1.0;
  const auto net = build_network(rates, p, Matrix::Ones(4, 4), 2);
  try {
    relative_throughput(net);
    FAIL("expected SingularChain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularChain);
  }
}

TEST_CASE("relative_utilization: hand values and homogeneity") {
  auto s = two_station();
  auto net = net_of(s, 1);
  Vector gamma = relative_utilization(net, relative_throughput(net));
  CHECK(gamma.isApprox(Vector::Ones(4)));

  s.lambda *= 2.0;
  net = net_of(s, 1);
  const Vector g2 = relative_utilization(net, relative_throughput(net));
  CHECK(g2(0) == doctest::Approx(0.5));
  CHECK(g2(1) == doctest::Approx(0.5));
  CHECK(g2(2) == doctest::Approx(1.0));
  CHECK(g2(3) == doctest::Approx(1.0));
}

TEST_CASE("relative_utilization: zero-rate station with flow") {
  auto s = two_station();
  const auto net = net_of(s, 1);
  const Vector pi = relative_throughput(net);
  auto broken = net;
  broken.station_rate(1) = 0.0;
  try {
    relative_utilization(broken, pi);
    FAIL("expected ZeroRate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kZeroRate);
  }
}

TEST_CASE("normalization_constants: hand values") {
  const auto net = net_of(two_station(), 2);
  const Vector pi = relative_throughput(net);
  const auto g = normalization_constants(net, pi, 2);
  CHECK(g.g[0] == 1.0);
  CHECK(g.g[1] == doctest::Approx(4.0).epsilon(1e-14));
  // 10 occupancy vectors: 6 distinct pairs at 1, two doubled stations at 1
  // and two doubled roads at 1/2.
  const double oracle = enumerate_g(net, pi, 2);
  CHECK(oracle == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(std::abs(g.g[2] - oracle) < 1e-12);
  CHECK_FALSE(g.overflowed);
}

TEST_CASE("normalization_constants: convolution equals enumeration on random networks") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = random_scenario(3, seed, 0.3);
    const auto net = net_of(s, 4);
    const Vector pi = relative_throughput(net);
    const auto g = normalization_constants(net, pi, 4);
    for (int k = 0; k <= 4; ++k) CHECK(rel_err(g.g[static_cast<std::size_t>(k)], enumerate_g(net, pi, k)) < 1e-12);
  }
}

TEST_CASE("throughput_and_availability: single vehicle on the symmetric pair") {
  const auto net = net_of(two_station(), 1);
  const Vector pi = relative_throughput(net);
  const Vector gamma = relative_utilization(net, pi);
  const auto g = normalization_constants(net, pi, 1);
  const auto ta = throughput_and_availability(net, pi, gamma, g, 1);
  CHECK(ta.availability(0) == doctest::Approx(0.25));
  CHECK(ta.availability(1) == doctest::Approx(0.25));
  CHECK(ta.throughput(0) == doctest::Approx(0.25));
}

TEST_CASE("availability of a balanced network rises monotonically towards one") {
  const auto s = two_station(1.0, 1.0, 3.0);
  const auto net = net_of(s, 200);
  const auto r = mva(net, 200);
  for (int k = 1; k < 200; ++k) CHECK(r.availability(k, 0) >= r.availability(k - 1, 0) - 1e-15);
  CHECK(r.availability(199, 0) > 0.99);
  CHECK(r.availability(199, 1) > 0.99);
}

TEST_CASE("availability of an unbalanced network tends to gamma_i / max gamma") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto s = unbalanced_five(seed);
    const auto net = net_of(s, 500);
    const auto a = analyze(net);
    const double top = a.gamma.head(5).maxCoeff();
    for (int i = 0; i < 5; ++i) CHECK(std::abs(a.availability(i) - a.gamma(i) / top) < 0.01);
  }
}

TEST_CASE("mva: single vehicle on the symmetric pair") {
  const auto net = net_of(two_station(), 1);
  const auto r = mva(net, 1);
  CHECK(r.availability(0, 0) == doctest::Approx(0.25));
  CHECK(r.availability(0, 1) == doctest::Approx(0.25));
  CHECK(r.queue_length(0, 0) + r.queue_length(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("mva: population conservation and agreement with convolution") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto s = random_scenario(3, 100 + seed);
    const int m = 4;
    const auto net = net_of(s, m);
    const auto r = mva(net, m);
    for (int k = 1; k <= m; ++k) CHECK(r.queue_length.row(k - 1).sum() == doctest::Approx(k).epsilon(1e-12));
    const Vector pi = relative_throughput(net);
    const Vector gamma = relative_utilization(net, pi);
    const auto g = normalization_constants(net, pi, m);
    for (int k = 1; k <= m; ++k) {
      const auto ta = throughput_and_availability(net, pi, gamma, g, k);
      for (int u = 0; u < net.node_count(); ++u) CHECK(rel_err(r.throughput(k - 1, u), ta.throughput(u)) < 1e-8);
      for (int i = 0; i < 3; ++i) CHECK(rel_err(r.availability(k - 1, i), ta.availability(i)) < 1e-8);
    }
    // Lumped-delay variant used in optimization loops.
    const Vector fast = mva_availability(net, pi, m);
    for (int i = 0; i < 3; ++i) CHECK(rel_err(fast(i), r.availability(m - 1, i)) < 1e-12);
  }
}

TEST_CASE("normalization_constants: log-space fallback keeps availabilities exact") {
  // Small rates make station utilizations large so G overflows linear range.
  auto s = random_scenario(4, 77);
  s.lambda *= 1e-3;
  const int m = 600;
  const auto net = net_of(s, m);
  const Vector pi = relative_throughput(net);
  const Vector gamma = relative_utilization(net, pi);
  const auto g = normalization_constants(net, pi, m);
  CHECK(g.overflowed);
  const auto ta = throughput_and_availability(net, pi, gamma, g, m);
  const auto r = mva(net, m);
  for (int i = 0; i < 4; ++i) CHECK(rel_err(ta.availability(i), r.availability(m - 1, i)) < 1e-8);
}

TEST_CASE("ctmc_oracle: single vehicle is distributed like gamma") {
  const auto s = random_scenario(3, 4);
  const auto net = net_of(s, 1);
  const auto d = ctmc_oracle(net, 1);
  const Vector gamma = relative_utilization(net, relative_throughput(net));
  REQUIRE(d.states.size() == static_cast<std::size_t>(net.node_count()));
  for (std::size_t k = 0; k < d.states.size(); ++k) {
    int node = 0;
    while (d.states[k][static_cast<std::size_t>(node)] == 0) ++node;
    CHECK(d.probability(static_cast<Eigen::Index>(k)) == doctest::Approx(gamma(node) / gamma.sum()).epsilon(1e-10));
  }
}

TEST_CASE("ctmc_oracle: two-node loop solved by hand") {
  JacksonNetwork net;
  net.stations = 2;
  net.population = 2;
  net.nodes = {{NodeKind::kStation, 0, 0}, {NodeKind::kStation, 1, 1}};
  net.out = {{{1, 1.0}}, {{0, 1.0}}};
  net.station_rate = Vector(2);
  net.station_rate << 1.0, 2.0;
  net.road_time = Vector::Zero(2);
  net.station_routing = Matrix(2, 2);
  net.station_routing << 0, 1, 1, 0;
  const auto d = ctmc_oracle(net, 2);
  REQUIRE(d.states.size() == 3);
  // States in lexicographic-descending order: (2,0), (1,1), (0,2).
  CHECK(d.probability(0) == doctest::Approx(4.0 / 7.0));
  CHECK(d.probability(1) == doctest::Approx(2.0 / 7.0));
  CHECK(d.probability(2) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("ctmc_oracle: state cap") {
  const auto net = net_of(random_scenario(3, 1), 30);
  try {
    ctmc_oracle(net, 30, 1000);
    FAIL("expected StateSpaceTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStateSpaceTooLarge);
  }
}

TEST_CASE("product form matches the CTMC on random small networks") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const int n = 2 + static_cast<int>(seed % 2);
    const int m = 1 + static_cast<int>(seed % 4);
    const auto s = random_scenario(n, 500 + seed, 0.3);
    const auto net = net_of(s, m);
    const auto d = ctmc_oracle(net, m);
    const Vector pi = relative_throughput(net);
    const auto g = normalization_constants(net, pi, m);
    double tv = 0.0;
    for (std::size_t k = 0; k < d.states.size(); ++k) {
      tv += std::abs(d.probability(static_cast<Eigen::Index>(k)) - product_form_probability(net, pi, g, d.states[k]));
    }
    CHECK(0.5 * tv < 1e-8);
  }
}
