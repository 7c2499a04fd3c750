#include "modnet/ingest.hpp"

#include "modnet/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace modnet {

namespace {

constexpr double kDay = 86400.0;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

}  // namespace

bool TimeWindow::contains(double t) const {
  if (!daily) return t >= start && t < end;
  double tod = std::fmod(t, kDay);
  if (tod < 0.0) tod += kDay;
  return tod >= start && tod < end;
}

void TimeWindow::validate() const {
  if (!(start < end)) throw Error(ErrorCode::kInvalidInput, "time window must have start < end");
  if (daily && (start < 0.0 || end > kDay)) {
    throw Error(ErrorCode::kInvalidInput, "daily window bounds must lie within [0, 86400]");
  }
}

double parse_timestamp(const std::string& text) {
  const std::string s = trim(text);
  double epoch = 0.0;
  if (parse_number(s, epoch)) return epoch;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, consumed = 0;
  double sec = 0.0;
  char sep = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &y, &mo, &d, &sep, &h, &mi, &sec, &consumed) != 7 ||
      (sep != 'T' && sep != ' ')) {
    throw Error(ErrorCode::kInvalidInput, "unreadable timestamp '" + s + "'");
  }
  const std::string rest = s.substr(static_cast<std::size_t>(consumed));
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!(rest.empty() || rest == "Z") || !ymd.ok() || h > 23 || mi > 59 || sec < 0.0 || sec >= 61.0) {
    throw Error(ErrorCode::kInvalidInput, "unreadable timestamp '" + s + "'");
  }
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days) * kDay + h * 3600.0 + mi * 60.0 + sec;
}

ParsedTrips parse_trips(const std::string& path, const TimeWindow& window) {
  window.validate();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  ParsedTrips out;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kEmptyWindow, "'" + path + "' is empty");
  static const char* kColumns[] = {"pickup_ts", "pickup_x", "pickup_y", "dropoff_x", "dropoff_y", "duration_s"};
  const auto header = split(line);
  std::vector<std::size_t> col;
  for (const char* name : kColumns) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::kIoError, std::string("header lacks column '") + name + "'");
    col.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      ++out.skipped;
      continue;
    }
    TripRecord r;
    double* fields[] = {&r.pickup_x, &r.pickup_y, &r.dropoff_x, &r.dropoff_y, &r.duration};
    bool ok = true;
    for (std::size_t k = 0; k < 5 && ok; ++k) ok = parse_number(cells[col[k + 1]], *fields[k]);
    if (ok) {
      try {
        r.pickup_time = parse_timestamp(cells[col[0]]);
      } catch (const Error&) {
        ok = false;
      }
    }
    if (!ok || !(r.duration > 0.0)) {
      ++out.skipped;
      continue;
    }
    if (!window.contains(r.pickup_time)) {
      ++out.outside_window;
      continue;
    }
    out.records.push_back(r);
  }
  if (out.records.empty()) throw Error(ErrorCode::kEmptyWindow, "no trips in the requested window");
  return out;
}

int nearest_station(const Eigen::MatrixX2d& centroids, double x, double y) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < centroids.rows(); ++c) {
    const double dx = centroids(c, 0) - x, dy = centroids(c, 1) - y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace {

struct LloydResult {
  Eigen::MatrixX2d centroids;
  double inertia;
};

LloydResult lloyd(const Eigen::MatrixX2d& pts, int k, std::mt19937_64& rng) {
  const auto n = pts.rows();
  Eigen::MatrixX2d c(k, 2);
  Eigen::VectorXd d2(n);
  c.row(0) = pts.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  for (int j = 1; j < k; ++j) {
    for (Eigen::Index p = 0; p < n; ++p) {
      d2(p) = (pts.row(p) - c.row(nearest_station(c.topRows(j), pts(p, 0), pts(p, 1)))).squaredNorm();
    }
    std::discrete_distribution<Eigen::Index> pick(d2.data(), d2.data() + n);
    c.row(j) = pts.row(pick(rng));
  }
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (Eigen::Index p = 0; p < n; ++p) {
      const int l = nearest_station(c, pts(p, 0), pts(p, 1));
      changed |= l != label[static_cast<std::size_t>(p)];
      label[static_cast<std::size_t>(p)] = l;
    }
    if (!changed && iter > 0) break;
    Eigen::MatrixX2d sum = Eigen::MatrixX2d::Zero(k, 2);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
    for (Eigen::Index p = 0; p < n; ++p) {
      sum.row(label[static_cast<std::size_t>(p)]) += pts.row(p);
      count(label[static_cast<std::size_t>(p)]) += 1.0;
    }
    for (int j = 0; j < k; ++j) {
      if (count(j) > 0.0) {
        c.row(j) = sum.row(j) / count(j);
        continue;
      }
      // Empty cluster: restart it at the point worst served.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index p = 0; p < n; ++p) {
        const double d = (pts.row(p) - c.row(label[static_cast<std::size_t>(p)])).squaredNorm();
        if (d > far_d) far_d = d, far = p;
      }
      c.row(j) = pts.row(far);
      label[static_cast<std::size_t>(far)] = j;
    }
  }
  double inertia = 0.0;
  for (Eigen::Index p = 0; p < n; ++p) {
    inertia += (pts.row(p) - c.row(nearest_station(c, pts(p, 0), pts(p, 1)))).squaredNorm();
  }
  return {c, inertia};
}

}  // namespace

Clustering cluster_stations(const std::vector<TripRecord>& trips, int k, std::uint64_t seed, int restarts) {
  if (k < 1) throw Error(ErrorCode::kInvalidInput, "need at least one station");
  const auto n = static_cast<Eigen::Index>(trips.size());
  Eigen::MatrixX2d pts(n, 2);
  std::vector<std::pair<double, double>> distinct;
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto& t = trips[static_cast<std::size_t>(p)];
    pts.row(p) << t.pickup_x, t.pickup_y;
    distinct.emplace_back(t.pickup_x, t.pickup_y);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < k) {
    throw Error(ErrorCode::kTooFewPoints,
                std::to_string(distinct.size()) + " distinct pickup points for " + std::to_string(k) + " stations");
  }
  std::mt19937_64 rng(seed);
  LloydResult best{Eigen::MatrixX2d(), std::numeric_limits<double>::infinity()};
  for (int r = 0; r < std::clamp(restarts, 1, 50); ++r) {
    auto run = lloyd(pts, k, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) order[static_cast<std::size_t>(j)] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::make_pair(best.centroids(a, 0), best.centroids(a, 1)) <
           std::make_pair(best.centroids(b, 0), best.centroids(b, 1));
  });
  Clustering out;
  out.centroids.resize(k, 2);
  for (int j = 0; j < k; ++j) out.centroids.row(j) = best.centroids.row(order[static_cast<std::size_t>(j)]);
  out.inertia = best.inertia;
  for (const auto& t : trips) {
    out.pickup_station.push_back(nearest_station(out.centroids, t.pickup_x, t.pickup_y));
    out.dropoff_station.push_back(nearest_station(out.centroids, t.dropoff_x, t.dropoff_y));
  }
  return out;
}

Estimate estimate_parameters(const std::vector<TripRecord>& trips, const Clustering& stations, double window_minutes,
                             const EstimateConfig& cfg) {
  const int n = static_cast<int>(stations.centroids.rows());
  if (stations.pickup_station.size() != trips.size() || stations.dropoff_station.size() != trips.size()) {
    throw Error(ErrorCode::kInvalidInput, "clustering does not match the trips");
  }
  if (!(window_minutes > 0.0) || !(cfg.smoothing > 0.0) || !(cfg.outlier_factor > 0.0) || !(cfg.rate_floor > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "window length, smoothing, outlier factor and rate floor must be positive");
  }
  if (n < 2) throw Error(ErrorCode::kInvalidInput, "need at least two stations");

  std::map<std::pair<int, int>, std::vector<double>> durations;
  for (std::size_t k = 0; k < trips.size(); ++k) {
    durations[{stations.pickup_station[k], stations.dropoff_station[k]}].push_back(trips[k].duration);
  }
  std::map<std::pair<int, int>, double> median;
  for (auto& [od, d] : durations) {
    std::vector<double> v = d;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    median[od] = m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  }

  Estimate est;
  Vector pickups = Vector::Zero(n);
  Matrix count = Matrix::Zero(n, n), total_time = Matrix::Zero(n, n);
  double distance_sum = 0.0, time_sum = 0.0;
  for (std::size_t k = 0; k < trips.size(); ++k) {
    const int i = stations.pickup_station[k], j = stations.dropoff_station[k];
    const auto& t = trips[k];
    if (t.duration > cfg.outlier_factor * median[{i, j}]) {
      ++est.outliers_dropped;
      continue;
    }
    ++est.trips_used;
    pickups(i) += 1.0;
    if (i == j) continue;
    count(i, j) += 1.0;
    total_time(i, j) += t.duration / 60.0;
    distance_sum += std::hypot(t.dropoff_x - t.pickup_x, t.dropoff_y - t.pickup_y);
    time_sum += t.duration / 60.0;
  }

  Scenario& s = est.scenario;
  s.time_unit = "min";
  s.coords = stations.centroids;
  s.lambda = pickups / window_minutes;
  for (int i = 0; i < n; ++i) {
    if (pickups(i) == 0.0) {
      s.lambda(i) = cfg.rate_floor;
      est.floored_stations.push_back(i);
      est.warnings.push_back("station " + std::to_string(i) + " has no pickups; rate floored");
    }
  }
  s.p = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) s.p(i, j) = (pickups(i) > 0.0 ? count(i, j) / pickups(i) : 0.0) + cfg.smoothing;
    }
    s.p.row(i) /= s.p.row(i).sum();
  }
  const double speed = time_sum > 0.0 ? distance_sum / time_sum : 0.0;
  s.t = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (count(i, j) > 0.0) {
        s.t(i, j) = total_time(i, j) / count(i, j);
        continue;
      }
      if (!(speed > 0.0)) {
        throw Error(ErrorCode::kDisconnectedDemand, "no inter-station trips to estimate a mean speed from");
      }
      s.t(i, j) = (stations.centroids.row(i) - stations.centroids.row(j)).norm() / speed;
      ++est.filled_pairs;
    }
  }
  if (!strongly_connected(s.p)) throw Error(ErrorCode::kDisconnectedDemand, "routing is not irreducible");
  const auto problems = validate_scenario(s);
  if (!problems.empty()) throw Error(ErrorCode::kDisconnectedDemand, "estimated scenario: " + problems.front().describe());
  return est;
}

}  // namespace modnet
