#include "doctest.h"

#include "modnet/generator.hpp"
#include "modnet/rebalance_lp.hpp"

#include <set>

using namespace modnet;

TEST_CASE("generator: seeded and valid in every style") {
  for (auto style : {ScenarioStyle::kUniform, ScenarioStyle::kGrid, ScenarioStyle::kSurrogate}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto a = generate_scenario(8, seed, style);
      const auto b = generate_scenario(8, seed, style);
      CHECK(validate_scenario(a).empty());
      CHECK(a.lambda == b.lambda);
      CHECK(a.p == b.p);
      CHECK(a.t == b.t);
      REQUIRE(a.coords.has_value());
      CHECK(a.coords->rows() == 8);
    }
    CHECK(parse_style(to_string(style)) == style);
    CHECK(generate_scenario(8, 1, style).lambda != generate_scenario(8, 2, style).lambda);
  }
  CHECK_THROWS_AS(parse_style("mesh"), Error);
}

TEST_CASE("generator: grid stations occupy distinct cells") {
  const auto s = generate_scenario(25, 4, ScenarioStyle::kGrid);
  std::set<std::pair<int, int>> cells;
  for (int i = 0; i < 25; ++i) {
    const double x = (*s.coords)(i, 0), y = (*s.coords)(i, 1);
    CHECK(x == std::round(x));
    CHECK(y == std::round(y));
    CHECK(x >= 0.0);
    CHECK(x <= 4.0);
    cells.insert({int(x), int(y)});
    for (int j = 0; j < 25; ++j) {
      if (i != j) CHECK(s.t(i, j) == doctest::Approx((s.coords->row(i) - s.coords->row(j)).norm() / 0.2));
    }
  }
  CHECK(cells.size() == 25);
  CHECK_THROWS_AS(generate_scenario(26, 4, ScenarioStyle::kGrid), Error);
}

TEST_CASE("surrogate: unbalanced, and fewer drivers spread passenger availability") {
  const auto s = surrogate_scenario();
  CHECK(s.size() == 20);
  CHECK(demand_imbalance(s).cwiseAbs().maxCoeff() > 0.1 * s.lambda.mean());
  const auto mrp = solve_mrp(s);
  double last = -1.0;
  for (int m_d : {250, 150, 75}) {  // m_v / m_d = 3, 5, 10
    const auto pm = passenger_availability(s, FleetConfig{750, m_d}, mrp.params);
    const Vector& a = pm.availability_passenger;
    const double spread = a.maxCoeff() - a.minCoeff();
    CAPTURE(m_d);
    CHECK(spread >= last);
    last = spread;
  }
}
