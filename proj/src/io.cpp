#include "modnet/io.hpp"

#include "modnet/error.hpp"
#include "modnet/rebalance_lp.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace modnet {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kInvalidInput, what); }

void check_keys(const Json& j, const std::string& what, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(what + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) bad(what + ": unknown key '" + key + "'");
  }
}

const Json& need(const Json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) bad(what + ": missing '" + key + "'");
  return j.at(key);
}

double number(const Json& j, const std::string& what) {
  if (!j.is_number()) bad(what + " must be a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& what) {
  if (!j.is_number_integer()) bad(what + " must be an integer");
  return j.get<int>();
}

Vector vector_from(const Json& j, const std::string& what) {
  if (!j.is_array()) bad(what + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], what);
  return v;
}

IntVector int_vector_from(const Json& j, const std::string& what) {
  if (!j.is_array()) bad(what + " must be an array");
  IntVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = integer(j[i], what);
  return v;
}

template <class M, class Cell>
M matrix_from(const Json& j, const std::string& what, Cell cell) {
  if (!j.is_array()) bad(what + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0);
  M m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) bad(what + " rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = cell(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

Matrix matrix_from(const Json& j, const std::string& what) { return matrix_from<Matrix>(j, what, number); }
IntMatrix int_matrix_from(const Json& j, const std::string& what) { return matrix_from<IntMatrix>(j, what, integer); }

template <class V>
Json vector_json(const V& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <class M>
Json matrix_json(const M& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

std::vector<double> double_list(const Json& j, const std::string& what) {
  const Vector v = vector_from(j, what);
  return {v.data(), v.data() + v.size()};
}

}  // namespace

Json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    bad(path.string() + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

Json to_json(const Scenario& s) {
  Json j;
  j["n"] = s.size();
  j["lambda"] = vector_json(s.lambda);
  j["p"] = matrix_json(s.p);
  j["t"] = matrix_json(s.t);
  if (s.coords) j["coords"] = matrix_json(*s.coords);
  j["units"] = {{"time", s.time_unit}, {"rate", "1/" + s.time_unit}};
  return j;
}

Scenario scenario_from_json(const Json& j) {
  const std::string what = "scenario";
  check_keys(j, what, {"n", "lambda", "p", "t", "coords", "units"});
  Scenario s;
  const int n = integer(need(j, "n", what), "scenario.n");
  s.lambda = vector_from(need(j, "lambda", what), "scenario.lambda");
  s.p = matrix_from(need(j, "p", what), "scenario.p");
  s.t = matrix_from(need(j, "t", what), "scenario.t");
  if (s.size() != n || s.p.rows() != n || s.p.cols() != n || s.t.rows() != n || s.t.cols() != n) {
    bad("scenario: lambda, p and t must match n = " + std::to_string(n));
  }
  if (j.contains("coords")) {
    const Matrix c = matrix_from(j.at("coords"), "scenario.coords");
    if (c.rows() != n || c.cols() != 2) bad("scenario.coords must hold n (x, y) pairs");
    s.coords = Eigen::MatrixX2d(c);
  }
  if (j.contains("units")) {
    const Json& u = j.at("units");
    check_keys(u, "scenario.units", {"time", "rate"});
    if (u.contains("time")) {
      if (!u.at("time").is_string() || u.at("time").get<std::string>().empty()) bad("scenario.units.time must be a name");
      s.time_unit = u.at("time").get<std::string>();
    }
    if (u.contains("rate") && u.at("rate") != "1/" + s.time_unit) {
      bad("scenario.units.rate must be 1/" + s.time_unit);
    }
  }
  return s;
}

Scenario read_scenario(const std::filesystem::path& path) { return scenario_from_json(read_json(path)); }

Json to_json(const RebalanceParams& rp) {
  Json j;
  j["lambda_del"] = vector_json(rp.lambda_del);
  j["psi"] = vector_json(rp.psi);
  j["eta"] = matrix_json(rp.eta);
  j["xi"] = matrix_json(rp.xi);
  return j;
}

RebalanceParams rebalance_from_json(const Json& j) {
  const std::string what = "rebalance";
  check_keys(j, what, {"lambda_del", "psi", "eta", "xi"});
  RebalanceParams rp;
  rp.lambda_del = vector_from(need(j, "lambda_del", what), "rebalance.lambda_del");
  rp.psi = vector_from(need(j, "psi", what), "rebalance.psi");
  rp.eta = matrix_from(need(j, "eta", what), "rebalance.eta");
  rp.xi = matrix_from(need(j, "xi", what), "rebalance.xi");
  return rp;
}

Json to_json(const FleetConfig& f) { return {{"vehicles", f.vehicles}, {"drivers", f.drivers}}; }

FleetConfig fleet_from_json(const Json& j) {
  check_keys(j, "fleet", {"vehicles", "drivers"});
  FleetConfig f;
  f.vehicles = integer(need(j, "vehicles", "fleet"), "fleet.vehicles");
  f.drivers = integer(need(j, "drivers", "fleet"), "fleet.drivers");
  return f;
}

Json to_json(const StationState& st) {
  Json j;
  j["v_e"] = vector_json(st.v_e);
  j["d_u"] = vector_json(st.d_u);
  j["c_u"] = matrix_json(st.c_u);
  j["v_t"] = matrix_json(st.v_t);
  j["v_a"] = matrix_json(st.v_a);
  return j;
}

StationState state_from_json(const Json& j) {
  const std::string what = "state";
  check_keys(j, what, {"v_e", "d_u", "c_u", "v_t", "v_a"});
  StationState st;
  st.v_e = int_vector_from(need(j, "v_e", what), "state.v_e");
  st.d_u = int_vector_from(need(j, "d_u", what), "state.d_u");
  st.c_u = int_matrix_from(need(j, "c_u", what), "state.c_u");
  const int n = st.size();
  st.v_t = j.contains("v_t") ? int_matrix_from(j.at("v_t"), "state.v_t") : IntMatrix::Zero(n, n);
  st.v_a = j.contains("v_a") ? int_matrix_from(j.at("v_a"), "state.v_a") : IntMatrix::Zero(n, n);
  st.validate();
  return st;
}

Json to_json(const SizingConfig& cfg) {
  Json j;
  j["ratios"] = cfg.ratios;
  j["thresholds"] = cfg.thresholds;
  j["cost_ratios"] = cfg.cost_ratios;
  j["max_drivers"] = cfg.max_drivers;
  j["step"] = cfg.step;
  return j;
}

SizingConfig sizing_from_json(const Json& j) {
  check_keys(j, "sizing", {"ratios", "thresholds", "cost_ratios", "max_drivers", "step"});
  SizingConfig cfg;
  if (j.contains("ratios")) cfg.ratios = double_list(j.at("ratios"), "sizing.ratios");
  if (j.contains("thresholds")) cfg.thresholds = double_list(j.at("thresholds"), "sizing.thresholds");
  if (j.contains("cost_ratios")) cfg.cost_ratios = double_list(j.at("cost_ratios"), "sizing.cost_ratios");
  if (j.contains("max_drivers")) cfg.max_drivers = integer(j.at("max_drivers"), "sizing.max_drivers");
  if (j.contains("step")) cfg.step = integer(j.at("step"), "sizing.step");
  cfg.validate();
  return cfg;
}

RebalanceParams resolve_rebalance(const std::string& choice, const Scenario& s, const std::filesystem::path& base_dir) {
  if (choice == "mrp") return solve_mrp(s).params;
  if (choice == "none") return RebalanceParams::none(s.size());
  return rebalance_from_json(read_json(base_dir / choice));
}

SimConfig sim_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  const std::string what = "simulation config";
  check_keys(j, what,
             {"mode", "scenario", "fleet", "rebalance", "w", "rebalance_period", "boardings_per_step",
              "sample_every", "dt", "horizon", "warmup", "replicas", "travel"});
  SimConfig cfg;
  if (j.contains("mode")) cfg.mode = parse_sim_mode(j.at("mode").get<std::string>());
  const Json& sj = need(j, "scenario", what);
  if (sj.is_string()) {
    cfg.scenario = read_scenario(base_dir / sj.get<std::string>());
  } else {
    cfg.scenario = scenario_from_json(sj);
  }
  cfg.fleet = fleet_from_json(need(j, "fleet", what));
  const Json rj = j.value("rebalance", Json("mrp"));
  cfg.rebalance = rj.is_string() ? resolve_rebalance(rj.get<std::string>(), cfg.scenario, base_dir)
                                 : rebalance_from_json(rj);
  if (j.contains("w")) cfg.w = number(j.at("w"), "w");
  if (j.contains("rebalance_period")) cfg.rebalance_period = integer(j.at("rebalance_period"), "rebalance_period");
  if (j.contains("boardings_per_step")) {
    cfg.boardings_per_step = integer(j.at("boardings_per_step"), "boardings_per_step");
  }
  if (j.contains("sample_every")) cfg.sample_every = integer(j.at("sample_every"), "sample_every");
  if (j.contains("dt")) cfg.dt = number(j.at("dt"), "dt");
  if (j.contains("horizon")) cfg.horizon = integer(j.at("horizon"), "horizon");
  if (j.contains("warmup")) cfg.warmup = integer(j.at("warmup"), "warmup");
  if (j.contains("replicas")) cfg.replicas = integer(j.at("replicas"), "replicas");
  if (j.contains("travel")) cfg.travel = parse_travel_model(j.at("travel").get<std::string>());
  return cfg;
}

Csv::Csv(const std::vector<std::string>& header) : columns_(header.size()) {
  for (const auto& h : header) cell(h);
  text_ += '\n';
  filled_ = 0;
}

void Csv::cell(const std::string& v) {
  if (filled_ == columns_) throw Error(ErrorCode::kInvalidInput, "csv row has too many cells");
  if (filled_ > 0) text_ += ',';
  text_ += v;
  ++filled_;
}

Csv& Csv::operator<<(double v) {
  cell(format_number(v));
  return *this;
}
Csv& Csv::operator<<(int v) {
  cell(std::to_string(v));
  return *this;
}
Csv& Csv::operator<<(long v) {
  cell(std::to_string(v));
  return *this;
}
Csv& Csv::operator<<(const std::string& v) {
  cell(v);
  return *this;
}

void Csv::end_row() {
  if (filled_ != columns_) throw Error(ErrorCode::kInvalidInput, "csv row has too few cells");
  text_ += '\n';
  filled_ = 0;
  ++rows_;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) return "0";  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIoError, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

}  // namespace modnet
