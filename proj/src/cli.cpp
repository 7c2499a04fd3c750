#include "modnet/cli.hpp"

#include "modnet/assignment.hpp"
#include "modnet/error.hpp"
#include "modnet/generator.hpp"
#include "modnet/ingest.hpp"
#include "modnet/io.hpp"
#include "modnet/jackson.hpp"
#include "modnet/rebalance_lp.hpp"
#include "modnet/rebalance_nlp.hpp"
#include "modnet/simulator.hpp"
#include "modnet/sizing.hpp"

#include <CLI11.hpp>
#include <boost/version.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace modnet {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string scenario;
  std::string out = ".";
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Per-invocation bookkeeping: inputs read, outputs staged, manifest data.
class Run {
 public:
  Run(std::string subcommand, const Common& common, std::ostream& log)
      : subcommand_(std::move(subcommand)), common_(common), log_(log) {}

  std::ostream& log() { return log_; }
  const Common& common() const { return common_; }

  fs::path input(const fs::path& path) {
    const std::string text = read_text(path);
    inputs_.push_back({{"path", path.string()}, {"sha256", sha256_hex(text)}});
    input_paths_.push_back(fs::weakly_canonical(path));
    return path;
  }

  void stage(const std::string& name, std::string text) { staged_.emplace_back(name, std::move(text)); }
  void stage(const std::string& name, const Csv& csv) { stage(name, csv.str()); }
  void stage(const std::string& name, const Json& j) { stage(name, j.dump(2) + "\n"); }

  void warn(const std::string& w) {
    warnings_.push_back(w);
    log_ << "warning: " << w << "\n";
  }

  // Writes staged outputs, refusing to overwrite any input.
  Json commit() {
    const fs::path dir(common_.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
    for (const auto& [name, text] : staged_) {
      const fs::path target = fs::weakly_canonical(dir / name);
      for (const auto& in : input_paths_) {
        if (in == target) throw Error(ErrorCode::kIoError, "refusing to overwrite input " + in.string());
      }
    }
    Json outputs = Json::array();
    for (const auto& [name, text] : staged_) {
      write_text(dir / name, text);
      outputs.push_back({{"path", name}, {"sha256", sha256_hex(text)}});
    }
    return outputs;
  }

  const Json& inputs() const { return inputs_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::string subcommand_;
  Common common_;
  std::ostream& log_;
  Json inputs_ = Json::array();
  std::vector<fs::path> input_paths_;
  std::vector<std::pair<std::string, std::string>> staged_;
  std::vector<std::string> warnings_;
};

Json versions() {
  Json v;
  v["modnet"] = kVersion;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = BOOST_LIB_VERSION;
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["cli11"] = CLI11_VERSION;
  v["compiler"] = __VERSION__;
  return v;
}

// Resolved option values of the chosen subcommand, minus those that do not
// change results (output directory, worker count, help).
Json option_config(const CLI::App& sub) {
  Json cfg = Json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty()) continue;
    const std::string& name = names.front();
    if (name == "help" || name == "out" || name == "jobs") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      cfg[name] = r.size() == 1 ? Json(r.front()) : Json(r);
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

Scenario load_scenario(Run& run) {
  if (run.common().scenario.empty()) throw UsageError("--scenario is required");
  Scenario s = read_scenario(run.input(run.common().scenario));
  const auto problems = validate_scenario(s);
  if (!problems.empty()) {
    std::string msg = "scenario is invalid:";
    for (const auto& v : problems) msg += " " + v.describe() + ";";
    throw Error(ErrorCode::kInvalidInput, msg);
  }
  return s;
}

RebalanceParams load_rebalance(Run& run, const std::string& choice, const Scenario& s) {
  if (choice != "mrp" && choice != "none") run.input(choice);
  return resolve_rebalance(choice, s);
}

Csv station_table(const Scenario& s) {
  Csv csv({"station", "x", "y", "lambda"});
  for (int i = 0; i < s.size(); ++i) {
    csv << i;
    if (s.coords) {
      csv << (*s.coords)(i, 0) << (*s.coords)(i, 1);
    } else {
      csv << "" << "";
    }
    csv << s.lambda(i);
    csv.end_row();
  }
  return csv;
}

Json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string csv_quote(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string q = "\"";
  for (char ch : text) {
    if (ch == '"') q += '"';
    q += ch == '\n' ? ' ' : ch;
  }
  return q + "\"";
}

// Runs fn(k) for k in [0, count) on `jobs` threads; rethrows the first error.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (int k = next++; k < count; k = next++) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < std::min(jobs, count); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  int n = 0;
  std::string style = "uniform";
};

void cmd_gen(Run& run, const GenArgs& a) {
  if (a.n < 2) throw UsageError("--n must be at least 2");
  const Scenario s = generate_scenario(a.n, run.common().seed, parse_style(a.style));
  run.stage("scenario.json", to_json(s));
  run.stage("stations.csv", station_table(s));
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  int vehicles = 0;
  int drivers = 0;
  std::string rebalance = "mrp";
};

struct SystemReport {
  Vector pi, gamma, throughput, availability;
  Csv curves{{"m", "station", "availability", "throughput", "queue_len"}};
};

SystemReport report_system(const SystemModel& sys, int population, int n) {
  SystemReport r;
  r.pi = r.gamma = r.throughput = r.availability = Vector::Zero(n);
  if (!sys.active || population <= 0) return r;
  try {
    const AnalysisResult res = analyze(sys.net);
    r.pi = res.pi.head(n);
    r.gamma = res.gamma.head(n);
    r.throughput = res.throughput.head(n);
    r.availability = res.availability;
    const MvaResult curve = mva(sys.net, population);
    for (int m = 1; m <= population; ++m) {
      for (int i = 0; i < n; ++i) {
        r.curves << m << i << curve.availability(m - 1, i) << curve.throughput(m - 1, i)
                 << curve.queue_length(m - 1, i);
        r.curves.end_row();
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kZeroRate) throw Error(ErrorCode::kDegenerateStation, e.what());
    throw;
  }
  return r;
}

void cmd_analyze(Run& run, const AnalyzeArgs& a) {
  const Scenario s = load_scenario(run);
  const FleetConfig fleet{a.vehicles, a.drivers};
  fleet.validate();
  const RebalanceParams rp = load_rebalance(run, a.rebalance, s);
  const SplitParams sp = split_demand(s, rp);
  const int n = s.size();
  const SystemReport r1 = report_system(customer_system(s, sp, fleet.customer_fleet()), fleet.customer_fleet(), n);
  const SystemReport r2 = report_system(taxi_system(s, sp, fleet.drivers), fleet.drivers, n);
  const PassengerMetrics pm = passenger_availability(s, fleet, rp, sp);

  Csv csv({"station", "lambda", "q", "pi1", "gamma1", "throughput1", "availability1", "pi2", "gamma2",
           "throughput2", "availability2", "availability_passenger"});
  for (int i = 0; i < n; ++i) {
    csv << i << s.lambda(i) << sp.q(i) << r1.pi(i) << r1.gamma(i) << r1.throughput(i) << r1.availability(i)
        << r2.pi(i) << r2.gamma(i) << r2.throughput(i) << r2.availability(i) << pm.availability_passenger(i);
    csv.end_row();
  }
  run.stage("stations.csv", csv);
  run.stage("mva_system1.csv", r1.curves);
  run.stage("mva_system2.csv", r2.curves);
  for (int i : sp.degenerate1) run.warn("station " + std::to_string(i) + " has no customer-driven demand");
}

// ---- rebalance lp / nlp ----------------------------------------------------

struct LpArgs {
  int vehicles = 0;
  int drivers = 0;
  std::vector<int> sweep_fleets;
  double sweep_ratio = 4.0;
};

void stage_flows(Run& run, const Matrix& beta, const Matrix& alpha) {
  Csv csv({"kind", "from", "to", "flow"});
  auto add = [&](const char* kind, const Matrix& f) {
    for (int i = 0; i < f.rows(); ++i) {
      for (int j = 0; j < f.cols(); ++j) {
        if (f(i, j) == 0.0) continue;
        csv << kind << i << j << f(i, j);
        csv.end_row();
      }
    }
  };
  add("delegated", beta);
  add("virtual", alpha);
  run.stage("flows.csv", csv);
}

void cmd_rebalance_lp(Run& run, const LpArgs& a) {
  const Scenario s = load_scenario(run);
  const MrpSolution sol = solve_mrp(s);
  run.stage("rebalance.json", to_json(sol.params));
  stage_flows(run, sol.beta, sol.alpha);
  Json summary;
  summary["delegated_cost"] = sol.beta_cost;
  summary["rebalancing_cost"] = sol.alpha_cost;
  summary["imbalance"] = vector_to_json(demand_imbalance(s));

  if (a.vehicles > 0 || a.drivers > 0) {
    const FleetConfig fleet{a.vehicles, a.drivers};
    const PassengerMetrics pm = passenger_availability(s, fleet, sol.params);
    Csv csv({"station", "availability_passenger", "availability1", "availability2"});
    for (int i = 0; i < s.size(); ++i) {
      csv << i << pm.availability_passenger(i) << pm.availability1(i) << pm.availability2(i);
      csv.end_row();
    }
    run.stage("availability.csv", csv);
    summary["fleet"] = to_json(fleet);
  }
  if (!a.sweep_fleets.empty()) {
    if (a.sweep_ratio <= 1.0) throw UsageError("--sweep-ratio must exceed 1");
    const SplitParams sp = split_demand(s, sol.params);
    std::vector<PassengerMetrics> rows(a.sweep_fleets.size());
    std::vector<FleetConfig> fleets;
    for (int m : a.sweep_fleets) {
      fleets.push_back({m, static_cast<int>(std::lround(m / a.sweep_ratio))});
      fleets.back().validate();
    }
    parallel_for(static_cast<int>(fleets.size()), run.common().jobs, [&](int k) {
      rows[static_cast<std::size_t>(k)] = passenger_availability(s, fleets[static_cast<std::size_t>(k)], sol.params, sp);
    });
    Csv csv({"m_v", "m_d", "station", "availability_passenger"});
    for (std::size_t k = 0; k < fleets.size(); ++k) {
      for (int i = 0; i < s.size(); ++i) {
        csv << fleets[k].vehicles << fleets[k].drivers << i << rows[k].availability_passenger(i);
        csv.end_row();
      }
    }
    run.stage("sweep.csv", csv);
  }
  run.stage("mrp.json", summary);
}

struct NlpArgs {
  int vehicles = 0;
  int drivers = 0;
  std::vector<double> c{1.0};
  int c_max = 0;
  int max_iterations = 400;
};

void cmd_rebalance_nlp(Run& run, const NlpArgs& a) {
  const Scenario s = load_scenario(run);
  MmrpConfig base;
  base.fleet = {a.vehicles, a.drivers};
  base.fleet.validate();
  base.max_iterations = a.max_iterations;
  std::vector<double> c_list = a.c;
  if (a.c_max > 0) {
    c_list.clear();
    for (int c = 1; c <= a.c_max; ++c) c_list.push_back(c);
  }
  const auto points = pareto_sweep(s, base, c_list, run.common().jobs);

  Csv csv({"c", "rebalancing_cost", "A_star", "iterations", "converged"});
  Json results = Json::array();
  for (const auto& pt : points) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const bool ok = pt.error.empty();
    csv << pt.c << (ok ? pt.rebalancing_cost : nan) << (ok ? pt.a_star : nan) << pt.iterations << pt.converged;
    csv.end_row();
    Json r;
    r["c"] = pt.c;
    if (ok) {
      r["status"] = pt.status;
      r["A_star"] = pt.a_star;
      r["rebalancing_cost"] = pt.rebalancing_cost;
      r["availability_gap"] = pt.availability_gap;
      r["iterations"] = pt.iterations;
      r["converged"] = pt.converged;
      r["params"] = to_json(pt.params);
    } else {
      r["status"] = "error";
      r["error"] = pt.error;
      run.warn("c = " + format_number(pt.c) + ": " + pt.error);
    }
    results.push_back(std::move(r));
  }
  run.stage("pareto.csv", csv);
  run.stage("mmrp.json", results);
  if (points.size() == 1 && points.front().error.empty()) run.stage("rebalance.json", to_json(points.front().params));
}

// ---- size ------------------------------------------------------------------

struct SizeArgs {
  std::string config;
  std::vector<double> ratios, thresholds, cost_ratios;
  int max_drivers = 0;
  int step = 0;
};

void cmd_size(Run& run, const SizeArgs& a) {
  const Scenario s = load_scenario(run);
  SizingConfig cfg;
  if (!a.config.empty()) cfg = sizing_from_json(read_json(run.input(a.config)));
  if (!a.ratios.empty()) cfg.ratios = a.ratios;
  if (!a.thresholds.empty()) cfg.thresholds = a.thresholds;
  if (!a.cost_ratios.empty()) cfg.cost_ratios = a.cost_ratios;
  if (a.max_drivers > 0) cfg.max_drivers = a.max_drivers;
  if (a.step > 0) cfg.step = a.step;
  cfg.validate();

  const auto sizes = size_fleet(s, cfg, run.common().jobs);
  Csv fleet({"ratio", "threshold", "m_v", "m_d", "min_availability", "monotone_edge", "error"});
  for (const auto& f : sizes) {
    fleet << f.ratio << f.threshold << f.vehicles << f.drivers << f.min_availability << f.monotone_edge
          << csv_quote(f.error);
    fleet.end_row();
    if (!f.error.empty()) run.warn("ratio " + format_number(f.ratio) + ", threshold " + format_number(f.threshold) + ": " + f.error);
  }
  const CostTable table = cost_curves(sizes, cfg.cost_ratios);
  Csv rows({"ratio", "threshold", "m_v", "m_d", "min_availability", "c_r", "c_total", "optimal"});
  for (const auto& r : table.rows) {
    rows << r.ratio << r.threshold << r.vehicles << r.drivers << r.min_availability << r.cost_ratio << r.total_cost
         << r.optimal;
    rows.end_row();
  }
  Csv best({"threshold", "c_r", "ratio", "c_total"});
  for (const auto& o : table.optimal) {
    best << o.threshold << o.cost_ratio << o.ratio << o.total_cost;
    best.end_row();
  }
  run.stage("sizing.csv", rows);
  run.stage("fleet.csv", fleet);
  run.stage("optimal.csv", best);
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string config;
};

void cmd_simulate(Run& run, const SimulateArgs& a) {
  const fs::path cfg_path = run.input(a.config);
  Json j = read_json(cfg_path);
  const fs::path base = cfg_path.parent_path();
  if (!run.common().scenario.empty()) {
    j["scenario"] = fs::absolute(run.input(run.common().scenario)).string();
  } else if (j.contains("scenario") && j["scenario"].is_string()) {
    run.input(base / j["scenario"].get<std::string>());
  }
  if (j.contains("rebalance") && j["rebalance"].is_string()) {
    const std::string choice = j["rebalance"].get<std::string>();
    if (choice != "mrp" && choice != "none") run.input(base / choice);
  }
  SimConfig cfg = sim_config_from_json(j, base);
  const auto problems = validate_scenario(cfg.scenario);
  if (!problems.empty()) throw Error(ErrorCode::kInvalidInput, "scenario is invalid: " + problems.front().describe());
  cfg.seed = run.common().seed;
  cfg.jobs = run.common().jobs;
  const SimMetrics m = run_simulation(cfg);
  const int n = cfg.scenario.size();

  Json summary;
  summary["mode"] = to_string(cfg.mode);
  summary["replicas"] = cfg.replicas;
  summary["horizon"] = cfg.horizon;
  summary["warmup"] = cfg.warmup_steps();
  summary["arrivals"] = m.arrivals;
  summary["served"] = m.served;
  summary["lost"] = m.lost;
  summary["rebalancing_trips"] = m.rebalancing_trips;
  summary["invariant_violations"] = m.invariant_violations;

  if (cfg.mode == SimMode::kLoss) {
    Vector analytic = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
    try {
      analytic = passenger_availability(cfg.scenario, cfg.fleet, cfg.rebalance).availability_passenger;
    } catch (const Error& e) {
      run.warn(std::string("no analytic availability: ") + e.what());
    }
    Csv csv({"station", "analytic_A", "empirical_A", "std"});
    for (int i = 0; i < n; ++i) {
      csv << i << analytic(i) << m.mean_availability(i) << m.std_availability(i);
      csv.end_row();
    }
    run.stage("simulate.csv", csv);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(analytic(i) - m.mean_availability(i)));
    summary["max_abs_error"] = worst;
  } else {
    Csv csv({"time", "station", "mean_wait", "std_wait"});
    for (int b = 0; b < m.bin_time.size(); ++b) {
      for (int i = 0; i < n; ++i) {
        csv << m.bin_time(b) << i << m.mean_wait(b, i) << m.std_wait(b, i);
        csv.end_row();
      }
    }
    run.stage("simulate.csv", csv);
    summary["assigned"] = m.assigned;
    summary["station_mean_wait"] = vector_to_json(m.station_mean_wait);
    summary["worst_station"] = m.worst_station;
    summary["slope"] = vector_to_json(m.slope);
    summary["slope_mean"] = m.slope_mean;
    summary["slope_ci95"] = {m.slope_low, m.slope_high};
  }
  for (const auto& w : m.warnings) run.warn(w);
  summary["warnings"] = m.warnings;
  run.stage("summary.json", summary);
}

// ---- assign ----------------------------------------------------------------

struct AssignArgs {
  std::string state;
};

void cmd_assign(Run& run, const AssignArgs& a) {
  const Json j = read_json(run.input(a.state));
  if (!j.is_object()) throw Error(ErrorCode::kInvalidInput, "assignment input must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key != "state" && key != "v_des" && key != "fleet" && key != "w") {
      throw Error(ErrorCode::kInvalidInput, "assignment input: unknown key '" + key + "'");
    }
  }
  if (!j.contains("state")) throw Error(ErrorCode::kInvalidInput, "assignment input: missing 'state'");
  const StationState st = state_from_json(j.at("state"));
  const int n = st.size();
  const double w = j.value("w", 1.0);
  AssignmentProblem ap;
  if (j.contains("v_des")) {
    ap = build_problem(st, FleetConfig{1, 0}, Vector::Ones(n), w);
    const auto& vd = j.at("v_des");
    if (!vd.is_array() || static_cast<int>(vd.size()) != n) {
      throw Error(ErrorCode::kInvalidInput, "v_des must have one entry per station");
    }
    for (int i = 0; i < n; ++i) ap.v_des(i) = vd[static_cast<std::size_t>(i)].get<double>();
  } else if (j.contains("fleet")) {
    const Scenario s = load_scenario(run);
    if (s.size() != n) throw Error(ErrorCode::kInvalidInput, "state and scenario sizes differ");
    ap = build_problem(st, fleet_from_json(j.at("fleet")), s.lambda, w);
  } else {
    throw Error(ErrorCode::kInvalidInput, "assignment input needs 'v_des' or 'fleet' (with --scenario)");
  }
  const AssignmentSolution sol = solve_assignment(ap);

  Json out;
  out["objective"] = sol.objective;
  out["bound"] = sol.bound;
  out["nodes"] = sol.nodes;
  out["lp_iterations"] = sol.lp_iterations;
  out["formulation_variables"] = ap.formulation_variables();
  out["v_des"] = vector_to_json(ap.v_des);
  out["predicted"] = vector_to_json(ap.predicted(sol.n_v));
  Json nv = Json::array(), nd = Json::array();
  Csv csv({"kind", "from", "to", "count"});
  for (int i = 0; i < n; ++i) {
    Json rv = Json::array(), rd = Json::array();
    for (int k = 0; k < n; ++k) {
      rv.push_back(sol.n_v(i, k));
      rd.push_back(sol.n_d(i, k));
    }
    nv.push_back(rv);
    nd.push_back(rd);
  }
  auto add = [&](const char* kind, const IntMatrix& m) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        if (m(i, k) == 0) continue;
        csv << kind << i << k << m(i, k);
        csv.end_row();
      }
    }
  };
  add("self_drive", sol.n_v);
  add("taxi", sol.n_d);
  out["n_v"] = nv;
  out["n_d"] = nd;
  run.stage("assignment.json", out);
  run.stage("assignment.csv", csv);
}

// ---- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string trips;
  int stations = 0;
  std::string window_start;
  std::string window_end;
  bool daily = false;
  int restarts = 10;
  double smoothing = 1e-3;
  double outlier_factor = 5.0;
  double rate_floor = 1e-6;
};

double time_of_day(const std::string& text) {
  int h = 0, m = 0, s = 0;
  char tail = 0;
  const int got = std::sscanf(text.c_str(), "%d:%d:%d%c", &h, &m, &s, &tail);
  if ((got != 2 && got != 3) || h < 0 || h > 24 || m < 0 || m > 59 || s < 0 || s > 59 ||
      h * 3600 + m * 60 + s > 86400) {
    throw UsageError("daily window bounds must look like HH:MM or HH:MM:SS, got '" + text + "'");
  }
  return h * 3600.0 + m * 60.0 + s;
}

void cmd_ingest(Run& run, const IngestArgs& a) {
  TimeWindow window;
  window.daily = a.daily;
  if (a.daily) {
    if (a.window_start.empty() || a.window_end.empty()) throw UsageError("--daily needs --window-start and --window-end");
    window.start = time_of_day(a.window_start);
    window.end = time_of_day(a.window_end);
  } else {
    if (!a.window_start.empty()) window.start = parse_timestamp(a.window_start);
    if (!a.window_end.empty()) window.end = parse_timestamp(a.window_end);
  }
  window.validate();
  const ParsedTrips parsed = parse_trips(run.input(a.trips), window);

  double first = std::numeric_limits<double>::infinity(), last = -first;
  for (const auto& r : parsed.records) {
    first = std::min(first, r.pickup_time);
    last = std::max(last, r.pickup_time);
  }
  double minutes = 0.0;
  if (a.daily) {
    const double days = std::floor(last / 86400.0) - std::floor(first / 86400.0) + 1.0;
    minutes = days * (window.end - window.start) / 60.0;
  } else {
    const double lo = std::isfinite(window.start) ? window.start : first;
    const double hi = std::isfinite(window.end) ? window.end : last;
    minutes = (hi - lo) / 60.0;
  }
  if (!(minutes > 0.0)) {
    throw Error(ErrorCode::kEmptyWindow, "observation window has zero length; pass --window-start/--window-end");
  }

  const Clustering c = cluster_stations(parsed.records, a.stations, run.common().seed, a.restarts);
  EstimateConfig ec;
  ec.smoothing = a.smoothing;
  ec.outlier_factor = a.outlier_factor;
  ec.rate_floor = a.rate_floor;
  const Estimate est = estimate_parameters(parsed.records, c, minutes, ec);
  for (const auto& w : est.warnings) run.warn(w);

  Json report;
  report["records"] = parsed.records.size();
  report["skipped"] = parsed.skipped;
  report["outside_window"] = parsed.outside_window;
  report["window_minutes"] = minutes;
  report["inertia"] = c.inertia;
  report["trips_used"] = est.trips_used;
  report["outliers_dropped"] = est.outliers_dropped;
  report["floored_stations"] = est.floored_stations;
  report["filled_pairs"] = est.filled_pairs;
  report["warnings"] = est.warnings;
  run.stage("scenario.json", to_json(est.scenario));
  run.stage("stations.csv", station_table(est.scenario));
  run.stage("ingest.json", report);
}

// ---- replay ----------------------------------------------------------------

struct ReplayArgs {
  std::string manifest;
  std::string out;
  bool check = false;
};

int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  const Json m = read_json(a.manifest);
  if (!m.contains("argv") || !m.contains("cwd")) throw Error(ErrorCode::kInvalidInput, "not a manifest: " + a.manifest);
  std::vector<std::string> args;
  const auto& recorded = m.at("argv");
  for (std::size_t k = 0; k < recorded.size(); ++k) {
    const std::string tok = recorded[k].get<std::string>();
    if (tok == "--out") {
      ++k;
      continue;
    }
    if (tok.rfind("--out=", 0) == 0) continue;
    args.push_back(tok);
  }
  const fs::path target = fs::absolute(a.out);
  args.push_back("--out");
  args.push_back(target.string());

  const fs::path here = fs::current_path();
  fs::current_path(m.at("cwd").get<std::string>());
  int code = 0;
  try {
    code = run_cli(args, out, err);
  } catch (...) {
    fs::current_path(here);
    throw;
  }
  fs::current_path(here);
  if (code != 0) return code;

  const Json fresh = read_json(target / "manifest.json");
  if (fresh.at("config_hash") != m.at("config_hash")) {
    err << "error: inputs or options differ from the manifest (config hash changed)\n";
    return 1;
  }
  if (!a.check) return 0;
  int mismatches = 0;
  for (const auto& o : m.at("outputs")) {
    const std::string name = o.at("path").get<std::string>();
    const std::string now = sha256_hex(read_text(target / name));
    if (now != o.at("sha256").get<std::string>()) {
      err << "mismatch: " << name << "\n";
      ++mismatches;
    }
  }
  out << "replay: " << m.at("outputs").size() - static_cast<std::size_t>(mismatches) << " of "
      << m.at("outputs").size() << " outputs identical\n";
  return mismatches == 0 ? 0 : 1;
}

void add_common(CLI::App* sub, Common& c, bool scenario) {
  if (scenario) sub->add_option("--scenario", c.scenario, "Scenario JSON file");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mobility-on-demand network analysis, rebalancing, sizing and simulation", "modnet"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  std::map<CLI::App*, std::function<void(Run&)>> handlers;
  std::map<CLI::App*, std::string> names;

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a seeded synthetic scenario");
  add_common(g, common, false);
  g->add_option("--n", gen.n, "Number of stations")->required();
  g->add_option("--style", gen.style, "uniform, grid or surrogate");
  handlers[g] = [&](Run& r) { cmd_gen(r, gen); };

  AnalyzeArgs an;
  auto* a = app.add_subcommand("analyze", "Exact closed-network analysis of both systems");
  add_common(a, common, true);
  a->add_option("--vehicles", an.vehicles, "Total vehicles m_v")->required();
  a->add_option("--drivers", an.drivers, "Drivers m_d")->required();
  a->add_option("--rebalance", an.rebalance, "mrp, none or a rebalance JSON file");
  handlers[a] = [&](Run& r) { cmd_analyze(r, an); };

  auto* reb = app.add_subcommand("rebalance", "Rebalancing controls");
  reb->require_subcommand(1);
  LpArgs lp;
  auto* l = reb->add_subcommand("lp", "Linear rebalancing problem (two min-cost flows)");
  add_common(l, common, true);
  l->add_option("--vehicles", lp.vehicles, "Total vehicles, for per-station availability");
  l->add_option("--drivers", lp.drivers, "Drivers, for per-station availability");
  l->add_option("--sweep-fleets", lp.sweep_fleets, "Comma-separated m_v values for an availability sweep")
      ->delimiter(',');
  l->add_option("--sweep-ratio", lp.sweep_ratio, "m_v / m_d used by the sweep");
  handlers[l] = [&](Run& r) { cmd_rebalance_lp(r, lp); };

  NlpArgs nlp;
  auto* nl = reb->add_subcommand("nlp", "Nonlinear rebalancing problem and Pareto sweep");
  add_common(nl, common, true);
  nl->add_option("--vehicles", nlp.vehicles, "Total vehicles m_v")->required();
  nl->add_option("--drivers", nlp.drivers, "Drivers m_d")->required();
  auto* c_opt = nl->add_option("--c", nlp.c, "Comma-separated availability weights")->delimiter(',');
  nl->add_option("--c-max", nlp.c_max, "Sweep c = 1, 2, ..., C")->excludes(c_opt);
  nl->add_option("--max-iterations", nlp.max_iterations, "Accepted descent steps per solve");
  handlers[nl] = [&](Run& r) { cmd_rebalance_nlp(r, nlp); };

  SizeArgs sz;
  auto* s = app.add_subcommand("size", "Fleet sizing over ratios and availability thresholds");
  add_common(s, common, true);
  s->add_option("--config", sz.config, "Sizing JSON file");
  s->add_option("--ratios", sz.ratios, "Comma-separated m_v / m_d ratios")->delimiter(',');
  s->add_option("--thresholds", sz.thresholds, "Comma-separated availability thresholds")->delimiter(',');
  s->add_option("--cost-ratios", sz.cost_ratios, "Comma-separated driver / vehicle cost ratios")->delimiter(',');
  s->add_option("--max-drivers", sz.max_drivers, "Search bound on m_d");
  s->add_option("--step", sz.step, "m_d granularity");
  handlers[s] = [&](Run& r) { cmd_size(r, sz); };

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "Loss or queueing simulation");
  add_common(sm, common, true);
  sm->add_option("--config", sim.config, "Simulation JSON file")->required();
  handlers[sm] = [&](Run& r) { cmd_simulate(r, sim); };

  AssignArgs as;
  auto* asg = app.add_subcommand("assign", "Solve one vehicle and driver assignment");
  add_common(asg, common, true);
  asg->add_option("--state", as.state, "Assignment JSON file")->required();
  handlers[asg] = [&](Run& r) { cmd_assign(r, as); };

  IngestArgs ing;
  auto* in = app.add_subcommand("ingest", "Estimate a scenario from trip records");
  add_common(in, common, false);
  in->add_option("--trips", ing.trips, "Trip CSV file")->required();
  in->add_option("--stations", ing.stations, "Number of stations")->required()->check(CLI::PositiveNumber);
  in->add_option("--window-start", ing.window_start, "Window start (timestamp, or HH:MM with --daily)");
  in->add_option("--window-end", ing.window_end, "Window end (timestamp, or HH:MM with --daily)");
  in->add_flag("--daily", ing.daily, "Match the window on every day");
  in->add_option("--restarts", ing.restarts, "k-means restarts (at most 50)");
  in->add_option("--smoothing", ing.smoothing, "Additive smoothing of destination counts");
  in->add_option("--outlier-factor", ing.outlier_factor, "Drop trips longer than this times the OD median");
  in->add_option("--rate-floor", ing.rate_floor, "Arrival rate given to stations without pickups");
  handlers[in] = [&](Run& r) { cmd_ingest(r, ing); };

  ReplayArgs rp;
  auto* re = app.add_subcommand("replay", "Rerun a manifest into a new directory");
  re->add_option("--manifest", rp.manifest, "manifest.json of an earlier run")->required();
  re->add_option("--out", rp.out, "Output directory")->required();
  re->add_flag("--check", rp.check, "Fail unless every output is byte-identical");

  std::vector<std::string> argv_store{"modnet"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s_ : argv_store) argv.push_back(s_.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  CLI::App* leaf = nullptr;
  std::string name;
  for (CLI::App* cur = &app; cur != nullptr;) {
    auto subs = cur->get_subcommands();
    if (subs.empty()) break;
    cur = subs.front();
    name += (name.empty() ? "" : " ") + cur->get_name();
    leaf = cur;
  }

  try {
    if (leaf == re) return cmd_replay(rp, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  const auto handler = handlers.find(leaf);
  if (handler == handlers.end()) {
    err << "error: no subcommand selected\n";
    return 2;
  }

  const auto start = std::chrono::steady_clock::now();
  Run run(name, common, err);
  Json manifest;
  manifest["subcommand"] = name;
  manifest["argv"] = args;
  manifest["cwd"] = fs::current_path().string();
  manifest["seed"] = common.seed;
  manifest["jobs"] = common.jobs;
  manifest["config"] = option_config(*leaf);
  manifest["versions"] = versions();

  int code = 0;
  try {
    handler->second(run);
    manifest["outputs"] = run.commit();
    manifest["status"] = "ok";
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    manifest["outputs"] = Json::array();
    manifest["status"] = "error";
    manifest["error"] = e.what();
    code = 1;
  }
  manifest["inputs"] = run.inputs();
  manifest["config_hash"] =
      sha256_hex(Json{{"subcommand", name}, {"config", manifest["config"]}, {"inputs", run.inputs()}}.dump());
  manifest["warnings"] = run.warnings();
  manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    fs::create_directories(common.out);
    write_text(fs::path(common.out) / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: cannot write manifest: " << e.what() << "\n";
    return 1;
  }
  if (code == 0) out << name << ": wrote " << manifest["outputs"].size() << " files to " << common.out << "\n";
  return code;
}

}  // namespace modnet
