#include "doctest.h"

#include "modnet/error.hpp"
#include "modnet/generator.hpp"
#include "modnet/io.hpp"

#include <filesystem>

using namespace modnet;

TEST_CASE("io: scenario round trip") {
  const Scenario s = generate_scenario(6, 3, ScenarioStyle::kUniform);
  const Json j = to_json(s);
  CHECK(j["n"] == 6);
  CHECK(j["units"]["rate"] == "1/min");
  const Scenario back = scenario_from_json(Json::parse(j.dump()));
  CHECK(back.lambda == s.lambda);
  CHECK(back.p == s.p);
  CHECK(back.t == s.t);
  REQUIRE(back.coords.has_value());
  CHECK(*back.coords == *s.coords);
  CHECK(to_json(back).dump() == j.dump());
}

TEST_CASE("io: scenario shape and unit errors") {
  Json j = to_json(generate_scenario(3, 1));
  Json bad = j;
  bad["n"] = 4;
  CHECK_THROWS_AS(scenario_from_json(bad), Error);
  bad = j;
  bad["lambdas"] = 1;
  CHECK_THROWS_WITH_AS(scenario_from_json(bad), doctest::Contains("unknown key"), Error);
  bad = j;
  bad["units"]["rate"] = "1/h";
  CHECK_THROWS_AS(scenario_from_json(bad), Error);
  bad = j;
  bad["p"][1] = Json::array({0.5, 0.5});
  CHECK_THROWS_AS(scenario_from_json(bad), Error);
  bad = j;
  bad["t"][0][1] = "x";
  CHECK_THROWS_AS(scenario_from_json(bad), Error);
  bad = j;
  bad.erase("units");
  CHECK(scenario_from_json(bad).time_unit == "min");
  CHECK_THROWS_WITH_AS(read_scenario("/nonexistent.json"), doctest::Contains("IoError"), Error);
}

TEST_CASE("io: rebalance, fleet, state and sizing round trips") {
  RebalanceParams rp = RebalanceParams::none(3);
  rp.lambda_del << 0.1, 0, 0.3;
  const RebalanceParams back = rebalance_from_json(to_json(rp));
  CHECK(back.lambda_del == rp.lambda_del);
  CHECK(back.xi == rp.xi);

  const FleetConfig f = fleet_from_json(to_json(FleetConfig{10, 4}));
  CHECK(f.vehicles == 10);
  CHECK(f.drivers == 4);

  StationState st = StationState::empty(2);
  st.v_e << 1, 2;
  st.c_u(0, 1) = 3;
  const StationState sb = state_from_json(to_json(st));
  CHECK(sb.v_e == st.v_e);
  CHECK(sb.c_u == st.c_u);
  Json neg = to_json(st);
  neg["d_u"][0] = -1;
  CHECK_THROWS_AS(state_from_json(neg), Error);

  SizingConfig cfg;
  cfg.ratios = {2.0, 3.0};
  cfg.max_drivers = 50;
  const SizingConfig cb = sizing_from_json(to_json(cfg));
  CHECK(cb.ratios == cfg.ratios);
  CHECK(cb.max_drivers == 50);
  CHECK_THROWS_AS(sizing_from_json(Json{{"ratios", {0.5}}}), Error);
}

TEST_CASE("io: simulation config") {
  const Scenario s = generate_scenario(4, 2);
  Json j;
  j["mode"] = "queueing";
  j["scenario"] = to_json(s);
  j["fleet"] = {{"vehicles", 20}, {"drivers", 5}};
  j["rebalance"] = "none";
  j["horizon"] = 900;
  const SimConfig cfg = sim_config_from_json(j, {});
  CHECK(cfg.mode == SimMode::kQueueing);
  CHECK(cfg.horizon == 900);
  CHECK(cfg.fleet.vehicles == 20);
  CHECK(cfg.rebalance.lambda_del.isZero());
  CHECK(cfg.scenario.lambda == s.lambda);
  j["seed"] = 3;
  CHECK_THROWS_WITH_AS(sim_config_from_json(j, {}), doctest::Contains("seed"), Error);
}

TEST_CASE("io: csv formatting") {
  Csv csv({"a", "b", "c"});
  csv << 1 << 0.1 << "x";
  csv.end_row();
  csv << -0.0 << 1e-20 << 123456789.123456789;
  csv.end_row();
  CHECK(csv.str() == "a,b,c\n1,0.1,x\n0,1e-20,123456789.123\n");
  CHECK(csv.rows() == 2);
  csv << 1;
  CHECK_THROWS_AS(csv.end_row(), Error);
}

TEST_CASE("io: sha256 test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
