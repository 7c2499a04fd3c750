#include "modnet/sizing.hpp"

#include "modnet/error.hpp"
#include "modnet/rebalance_lp.hpp"

#include <cmath>
#include <map>
#include <thread>

namespace modnet {

void SizingConfig::validate() const {
  for (double r : ratios) {
    if (!(r > 1.0)) throw Error(ErrorCode::kInvalidInput, "vehicle-to-driver ratios must exceed 1");
  }
  for (double t : thresholds) {
    if (!(t >= 0.0 && t < 1.0)) throw Error(ErrorCode::kInvalidInput, "availability thresholds must lie in [0, 1)");
  }
  for (double c : cost_ratios) {
    if (!(c >= 1.0)) throw Error(ErrorCode::kInvalidInput, "cost ratios must be at least 1");
  }
  if (max_drivers < 1 || step < 1) throw Error(ErrorCode::kInvalidInput, "search bound and step must be positive");
}

FleetConfig fleet_for_ratio(double ratio, int drivers) {
  return FleetConfig{static_cast<int>(std::lround(ratio * drivers)), drivers};
}

double min_passenger_availability(const Scenario& s, const RebalanceParams& rp, const FleetConfig& fleet) {
  return passenger_availability(s, fleet, rp).availability_passenger.minCoeff();
}

FleetSize min_fleet_for_threshold(const Scenario& s, const RebalanceParams& rp, double ratio, double threshold,
                                  const SizingConfig& cfg) {
  SizingConfig one = cfg;
  one.ratios = {ratio};
  one.thresholds = {threshold};
  one.validate();

  int m0 = 1;
  while (fleet_for_ratio(ratio, m0).vehicles <= m0) ++m0;
  if (m0 > cfg.max_drivers) {
    throw Error(ErrorCode::kNotReachedWithinBounds, "no legal fleet within the driver bound");
  }
  const int k_max = (cfg.max_drivers - m0) / cfg.step;
  auto drivers = [&](int k) { return m0 + k * cfg.step; };

  std::map<int, double> cache;
  auto avail = [&](int k) {
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    const double a = min_passenger_availability(s, rp, fleet_for_ratio(ratio, drivers(k)));
    cache.emplace(k, a);
    return a;
  };
  auto ok = [&](int k) { return avail(k) >= threshold; };

  int found = 0;
  if (!ok(0)) {
    int lo = 0, hi = 1;
    while (true) {
      hi = std::min(hi, k_max);
      if (ok(hi)) break;
      if (hi == k_max) {
        throw Error(ErrorCode::kNotReachedWithinBounds,
                    "threshold " + std::to_string(threshold) + " not reached with " + std::to_string(drivers(k_max)) +
                        " drivers at ratio " + std::to_string(ratio));
      }
      lo = hi;
      hi *= 2;
    }
    while (hi - lo > 1) {
      const int mid = lo + (hi - lo) / 2;
      (ok(mid) ? hi : lo) = mid;
    }
    found = hi;
  }

  FleetSize out;
  for (int k = std::max(0, found - 2); k < found; ++k) {
    if (ok(k)) {
      found = k;
      break;
    }
  }
  for (int k = found + 1; k <= std::min(found + 2, k_max); ++k) {
    if (!ok(k)) out.monotone_edge = false;
  }
  const auto fleet = fleet_for_ratio(ratio, drivers(found));
  out.ratio = ratio;
  out.threshold = threshold;
  out.vehicles = fleet.vehicles;
  out.drivers = fleet.drivers;
  out.min_availability = avail(found);
  return out;
}

CostTable cost_curves(const std::vector<FleetSize>& sizes, const std::vector<double>& cost_ratios) {
  CostTable table;
  // Keyed by (threshold, c_r): index of the best row so far.
  std::map<std::pair<double, double>, std::size_t> best;
  for (double cr : cost_ratios) {
    for (const auto& fs : sizes) {
      if (!fs.error.empty()) continue;
      CostRow row;
      row.ratio = fs.ratio;
      row.threshold = fs.threshold;
      row.cost_ratio = cr;
      row.vehicles = fs.vehicles;
      row.drivers = fs.drivers;
      row.min_availability = fs.min_availability;
      row.total_cost = fs.vehicles + cr * fs.drivers;
      table.rows.push_back(row);
      const auto key = std::make_pair(fs.threshold, cr);
      auto it = best.find(key);
      const std::size_t idx = table.rows.size() - 1;
      if (it == best.end()) {
        best.emplace(key, idx);
      } else {
        const auto& cur = table.rows[it->second];
        if (row.total_cost < cur.total_cost || (row.total_cost == cur.total_cost && row.ratio < cur.ratio)) {
          it->second = idx;
        }
      }
    }
  }
  for (const auto& [key, idx] : best) {
    table.rows[idx].optimal = true;
    table.optimal.push_back({key.first, key.second, table.rows[idx].ratio, table.rows[idx].total_cost});
  }
  return table;
}

std::vector<FleetSize> size_fleet(const Scenario& s, const SizingConfig& cfg, int jobs) {
  cfg.validate();
  const auto mrp = solve_mrp(s);
  const std::size_t nt = cfg.thresholds.size();
  std::vector<FleetSize> out(cfg.ratios.size() * nt);
  auto work = [&](std::size_t cell) {
    const double ratio = cfg.ratios[cell / nt];
    const double threshold = cfg.thresholds[cell % nt];
    try {
      out[cell] = min_fleet_for_threshold(s, mrp.params, ratio, threshold, cfg);
    } catch (const Error& e) {
      out[cell].ratio = ratio;
      out[cell].threshold = threshold;
      out[cell].error = e.what();
    }
  };
  jobs = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = static_cast<std::size_t>(w); k < out.size(); k += static_cast<std::size_t>(jobs)) work(k);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace modnet
