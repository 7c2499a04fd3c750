#pragma once

#include "modnet/assignment.hpp"
#include "modnet/scenario.hpp"
#include "modnet/simulator.hpp"
#include "modnet/sizing.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace modnet {

using Json = nlohmann::ordered_json;

// Parse failures and wrong shapes throw kInvalidInput; unreadable or
// unwritable files throw kIoError. Objects with unknown keys are rejected.
Json read_json(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// {"n", "lambda", "p", "t", "coords"?, "units": {"time", "rate"}}
Json to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);
Scenario read_scenario(const std::filesystem::path& path);

// {"lambda_del", "psi", "eta", "xi"}
Json to_json(const RebalanceParams& rp);
RebalanceParams rebalance_from_json(const Json& j);

// {"vehicles", "drivers"}
Json to_json(const FleetConfig& f);
FleetConfig fleet_from_json(const Json& j);

// {"v_e", "d_u", "c_u", "v_t", "v_a"}
Json to_json(const StationState& st);
StationState state_from_json(const Json& j);

// {"ratios", "thresholds", "cost_ratios", "max_drivers", "step"}, all optional.
Json to_json(const SizingConfig& cfg);
SizingConfig sizing_from_json(const Json& j);

// Simulation config. "scenario" is a path (relative to `base_dir`) or an
// inline scenario object. "rebalance" is "mrp" (default), "none", a path or
// an inline object. The seed is not part of the file.
SimConfig sim_config_from_json(const Json& j, const std::filesystem::path& base_dir);

// Resolves a rebalance argument: "mrp", "none" or a JSON file.
RebalanceParams resolve_rebalance(const std::string& choice, const Scenario& s,
                                  const std::filesystem::path& base_dir = {});

// Plain CSV; numbers printed with %.12g.
class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header);

  Csv& operator<<(double v);
  Csv& operator<<(int v);
  Csv& operator<<(long v);
  Csv& operator<<(const std::string& v);
  Csv& operator<<(const char* v) { return *this << std::string(v); }
  Csv& operator<<(bool v) { return *this << static_cast<int>(v); }
  void end_row();

  const std::string& str() const { return text_; }
  int rows() const { return rows_; }

 private:
  void cell(const std::string& v);

  std::string text_;
  std::size_t columns_;
  std::size_t filled_ = 0;
  int rows_ = 0;
};

std::string format_number(double v);

// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

}  // namespace modnet
