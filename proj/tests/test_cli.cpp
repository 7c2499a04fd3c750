#include "doctest.h"

#include "modnet/assignment.hpp"
#include "modnet/cli.hpp"
#include "modnet/io.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace modnet;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MODNET_TEST_DATA;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "modnet_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int count_manifests(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.path().filename() == "manifest.json";
  return n;
}

}  // namespace

TEST_CASE("cli: help and usage errors") {
  auto r = cli({"--help"});
  CHECK(r.code == 0);
  for (const char* sub : {"gen", "analyze", "rebalance", "size", "simulate", "assign", "ingest"}) {
    CHECK(r.out.find(sub) != std::string::npos);
  }
  for (std::vector<std::string> sub : std::vector<std::vector<std::string>>{
           {"analyze"}, {"rebalance", "lp"}, {"rebalance", "nlp"}, {"size"}, {"simulate"}, {"assign"}}) {
    sub.push_back("--help");
    r = cli(sub);
    CHECK(r.code == 0);
    for (const char* flag : {"--scenario", "--out", "--seed", "--jobs"}) CHECK(r.out.find(flag) != std::string::npos);
  }
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"rebalance"}).code == 2);
  CHECK(cli({"analyze", "--scenario", "x.json"}).code == 2);  // missing fleet
  CHECK(cli({"gen", "--n", "5", "--jobs", "0"}).code == 2);
  CHECK(cli({"gen", "--n", "1", "--out", fresh_dir("gen1").string()}).code == 2);
  CHECK(cli({"rebalance", "nlp", "--scenario", "x", "--vehicles", "5", "--drivers", "1", "--c", "1", "--c-max", "3"})
            .code == 2);
}

TEST_CASE("cli: gen is seeded and valid") {
  const auto d = fresh_dir("gen");
  CHECK(cli({"gen", "--n", "2", "--out", (d / "a").string()}).code == 0);
  const Scenario s = read_scenario(d / "a" / "scenario.json");
  CHECK(s.size() == 2);
  CHECK(validate_scenario(s).empty());
  CHECK(cli({"gen", "--n", "20", "--seed", "7", "--out", (d / "b").string()}).code == 0);
  CHECK(cli({"gen", "--n", "20", "--seed", "7", "--out", (d / "c").string()}).code == 0);
  CHECK(read_text(d / "b" / "scenario.json") == read_text(d / "c" / "scenario.json"));
  CHECK(validate_scenario(read_scenario(d / "b" / "scenario.json")).empty());
  CHECK(cli({"gen", "--n", "20", "--seed", "8", "--out", (d / "e").string()}).code == 0);
  CHECK(read_text(d / "b" / "scenario.json") != read_text(d / "e" / "scenario.json"));
  CHECK(count_manifests(d) == 4);
}

TEST_CASE("cli: analyze on the fixture matches a product-form enumeration") {
  const auto d = fresh_dir("analyze");
  const auto r = cli({"analyze", "--scenario", (kData / "two_station.json").string(), "--vehicles", "6", "--drivers",
                      "2", "--rebalance", "none", "--out", d.string()});
  REQUIRE(r.code == 0);
  CHECK(count_manifests(d) == 1);

  // Customer fleet of 4 on two stations (utilizations 1 and 1/2, relative
  // throughputs equal) and two roads of total delay 1 + 2 = 3.
  auto oracle = [](int m, int station, double& avail, double& queue) {
    double total = 0, busy = 0, len = 0;
    for (int a = 0; a <= m; ++a) {
      for (int b = 0; a + b <= m; ++b) {
        const int k = m - a - b;
        const double w = std::pow(0.5, b) * std::pow(3.0, k) / std::tgamma(k + 1.0);
        const int mine = station == 0 ? a : b;
        total += w;
        busy += mine > 0 ? w : 0.0;
        len += mine * w;
      }
    }
    avail = busy / total;
    queue = len / total;
  };
  const auto rows = read_csv(d / "mva_system1.csv");
  REQUIRE(rows.size() == 9);
  CHECK(rows[0] == std::vector<std::string>{"m", "station", "availability", "throughput", "queue_len"});
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const int m = std::stoi(rows[k][0]), i = std::stoi(rows[k][1]);
    double a = 0, q = 0;
    oracle(m, i, a, q);
    CHECK(std::stod(rows[k][2]) == doctest::Approx(a).epsilon(1e-10));
    CHECK(std::stod(rows[k][3]) == doctest::Approx(a * (i == 0 ? 1.0 : 2.0)).epsilon(1e-10));
    CHECK(std::stod(rows[k][4]) == doctest::Approx(q).epsilon(1e-10));
  }
  CHECK(read_csv(d / "mva_system2.csv").size() == 1);  // no taxi demand
  const auto st = read_csv(d / "stations.csv");
  REQUIRE(st.size() == 3);
  double a0 = 0, q0 = 0;
  oracle(4, 0, a0, q0);
  CHECK(std::stod(st[1][6]) == doctest::Approx(a0).epsilon(1e-10));
  CHECK(std::stod(st[1][11]) == doctest::Approx(a0).epsilon(1e-10));

  const Json m = read_json(d / "manifest.json");
  CHECK(m["subcommand"] == "analyze");
  CHECK(m["status"] == "ok");
  CHECK(m["seed"] == 0);
  CHECK(m["outputs"].size() == 3);
  for (const auto& o : m["outputs"]) CHECK(o["sha256"] == sha256_hex(read_text(d / o["path"].get<std::string>())));
  CHECK(m["inputs"][0]["sha256"] == sha256_hex(read_text(kData / "two_station.json")));
}

TEST_CASE("cli: module errors exit 1 and still leave a manifest") {
  const auto d = fresh_dir("errors");
  Json bad = read_json(kData / "two_station.json");
  bad["p"][0][1] = 0.5;
  write_text(d / "bad.json", bad.dump());
  const auto r = cli({"analyze", "--scenario", (d / "bad.json").string(), "--vehicles", "6", "--drivers", "2",
                      "--out", (d / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("InvalidInput") != std::string::npos);
  const Json m = read_json(d / "o" / "manifest.json");
  CHECK(m["status"] == "error");
  CHECK(m["outputs"].empty());

  CHECK(cli({"analyze", "--scenario", (d / "missing.json").string(), "--vehicles", "6", "--drivers", "2", "--out",
             (d / "o2").string()})
            .code == 1);
  CHECK(cli({"analyze", "--scenario", (kData / "two_station.json").string(), "--vehicles", "2", "--drivers", "2",
             "--out", (d / "o3").string()})
            .code == 1);
}

TEST_CASE("cli: inputs are never overwritten") {
  const auto d = fresh_dir("inputs");
  const std::string original = read_text(kData / "two_station.json");
  write_text(d / "rebalance.json", original);
  const auto r = cli({"rebalance", "lp", "--scenario", (d / "rebalance.json").string(), "--out", d.string()});
  CHECK(r.code == 1);
  CHECK(read_text(d / "rebalance.json") == original);
  CHECK(!fs::exists(d / "flows.csv"));
}

TEST_CASE("cli: replay reproduces outputs byte for byte") {
  const auto d = fresh_dir("replay");
  write_text(d / "scenario.json", read_text(kData / "two_station.json"));
  REQUIRE(cli({"rebalance", "lp", "--scenario", (d / "scenario.json").string(), "--vehicles", "8", "--drivers", "2",
               "--sweep-fleets", "4,8,12", "--out", (d / "first").string()})
              .code == 0);
  const auto r = cli({"replay", "--manifest", (d / "first" / "manifest.json").string(), "--out",
                      (d / "second").string(), "--check"});
  CHECK(r.code == 0);
  for (const char* f : {"rebalance.json", "flows.csv", "availability.csv", "sweep.csv", "mrp.json"}) {
    CHECK(read_text(d / "first" / f) == read_text(d / "second" / f));
  }
  CHECK(read_json(d / "first" / "manifest.json")["config_hash"] ==
        read_json(d / "second" / "manifest.json")["config_hash"]);

  Json changed = read_json(d / "scenario.json");
  changed["lambda"][0] = 1.5;
  write_text(d / "scenario.json", changed.dump());
  CHECK(cli({"replay", "--manifest", (d / "first" / "manifest.json").string(), "--out", (d / "third").string()})
            .code == 1);
}

TEST_CASE("cli: assign matches the library solve") {
  const auto d = fresh_dir("assign");
  StationState st = StationState::empty(3);
  st.v_e << 2, 0, 1;
  st.d_u << 1, 1, 0;
  st.c_u << 0, 2, 1, 1, 0, 0, 0, 1, 0;
  Json in;
  in["state"] = to_json(st);
  in["v_des"] = {1.0, 1.5, 0.5};
  in["w"] = 2.0;
  write_text(d / "in.json", in.dump());
  REQUIRE(cli({"assign", "--state", (d / "in.json").string(), "--out", d.string()}).code == 0);

  AssignmentProblem ap = build_problem(st, FleetConfig{1, 0}, Vector::Ones(3), 2.0);
  ap.v_des << 1.0, 1.5, 0.5;
  const auto sol = solve_assignment(ap);
  const Json out = read_json(d / "assignment.json");
  CHECK(out["objective"].get<double>() == doctest::Approx(sol.objective));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(out["n_v"][i][j] == sol.n_v(i, j));
      CHECK(out["n_d"][i][j] == sol.n_d(i, j));
    }
  }
  CHECK(out["formulation_variables"] == 21);
}

TEST_CASE("cli: size, simulate and ingest run end to end") {
  const auto d = fresh_dir("pipeline");
  const std::string scen = (kData / "two_station.json").string();
  REQUIRE(cli({"size", "--scenario", scen, "--ratios", "2,4", "--thresholds", "0.8", "--cost-ratios", "1,3", "--out",
               (d / "size").string()})
              .code == 0);
  const auto sizing = read_csv(d / "size" / "sizing.csv");
  CHECK(sizing[0] == std::vector<std::string>{"ratio", "threshold", "m_v", "m_d", "min_availability", "c_r", "c_total",
                                              "optimal"});
  CHECK(sizing.size() == 5);
  for (std::size_t k = 1; k < sizing.size(); ++k) CHECK(std::stod(sizing[k][4]) >= 0.8);

  Json cfg;
  cfg["mode"] = "loss";
  cfg["scenario"] = scen;
  cfg["fleet"] = {{"vehicles", 12}, {"drivers", 3}};
  cfg["dt"] = 0.25;
  cfg["horizon"] = 4000;
  cfg["replicas"] = 3;
  write_text(d / "sim.json", cfg.dump());
  REQUIRE(cli({"simulate", "--config", (d / "sim.json").string(), "--seed", "3", "--out", (d / "sim").string()})
              .code == 0);
  const auto sim = read_csv(d / "sim" / "simulate.csv");
  CHECK(sim[0] == std::vector<std::string>{"station", "analytic_A", "empirical_A", "std"});
  CHECK(sim.size() == 3);
  for (std::size_t k = 1; k < sim.size(); ++k) {
    CHECK(std::stod(sim[k][2]) == doctest::Approx(std::stod(sim[k][1])).epsilon(0.1));
  }
  REQUIRE(cli({"simulate", "--config", (d / "sim.json").string(), "--seed", "3", "--jobs", "3", "--out",
               (d / "sim2").string()})
              .code == 0);
  CHECK(read_text(d / "sim" / "simulate.csv") == read_text(d / "sim2" / "simulate.csv"));

  cfg["mode"] = "queueing";
  cfg["dt"] = 0.1;
  cfg["horizon"] = 1500;
  cfg["sample_every"] = 100;
  write_text(d / "queue.json", cfg.dump());
  REQUIRE(cli({"simulate", "--config", (d / "queue.json").string(), "--out", (d / "queue").string()}).code == 0);
  const auto q = read_csv(d / "queue" / "simulate.csv");
  CHECK(q[0] == std::vector<std::string>{"time", "station", "mean_wait", "std_wait"});
  CHECK(read_json(d / "queue" / "summary.json")["invariant_violations"] == 0);

  std::string trips = "pickup_ts,pickup_x,pickup_y,dropoff_x,dropoff_y,duration_s\n";
  for (int k = 0; k < 30; ++k) {
    const bool west = k % 3 != 0;
    trips += std::to_string(1000 + 60 * k) + (west ? ",0,0,5,5," : ",5,5,0,0,") + "600\n";
  }
  write_text(d / "trips.csv", trips);
  REQUIRE(cli({"ingest", "--trips", (d / "trips.csv").string(), "--stations", "2", "--window-start", "1000",
               "--window-end", "2800", "--out", (d / "ingest").string()})
              .code == 0);
  const Scenario s = read_scenario(d / "ingest" / "scenario.json");
  CHECK(s.lambda(0) == doctest::Approx(20.0 / 30.0));
  CHECK(s.lambda(1) == doctest::Approx(10.0 / 30.0));
  CHECK(s.t(0, 1) == doctest::Approx(10.0));
  CHECK(cli({"ingest", "--trips", (d / "trips.csv").string(), "--stations", "2", "--window-start", "5000",
             "--out", (d / "empty").string()})
            .code == 1);
}
