#include "modnet/simulator.hpp"

#include "modnet/error.hpp"
#include "modnet/min_cost_flow.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <thread>

namespace modnet {

SimMode parse_sim_mode(const std::string& name) {
  if (name == "loss") return SimMode::kLoss;
  if (name == "queueing") return SimMode::kQueueing;
  throw Error(ErrorCode::kInvalidInput, "unknown simulation mode '" + name + "'");
}

TravelModel parse_travel_model(const std::string& name) {
  if (name == "exponential") return TravelModel::kExponential;
  if (name == "deterministic") return TravelModel::kDeterministic;
  throw Error(ErrorCode::kInvalidInput, "unknown travel model '" + name + "'");
}

std::string to_string(SimMode mode) { return mode == SimMode::kLoss ? "loss" : "queueing"; }

std::string to_string(TravelModel travel) {
  return travel == TravelModel::kExponential ? "exponential" : "deterministic";
}

void SimConfig::validate() const {
  const auto problems = validate_scenario(scenario);
  if (!problems.empty()) throw Error(ErrorCode::kInvalidInput, "scenario: " + problems.front().describe());
  // Loss mode tolerates an empty customer-driven system (all vehicles are
  // taxis); the closed-loop policy needs m_v > m_d for its target split.
  if (mode == SimMode::kQueueing) {
    fleet.validate();
  } else if (fleet.drivers < 0 || fleet.vehicles < fleet.drivers || fleet.vehicles == 0) {
    throw Error(ErrorCode::kInvalidInput, "loss mode needs vehicles >= drivers >= 0 and at least one vehicle");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::kInvalidInput, "dt must be positive");
  if (horizon <= 0) throw Error(ErrorCode::kInvalidInput, "horizon must be positive");
  if (warmup_steps() >= horizon) throw Error(ErrorCode::kInvalidInput, "warmup must be shorter than the horizon");
  if (replicas < 1 || jobs < 1) throw Error(ErrorCode::kInvalidInput, "replicas and jobs must be at least 1");
  if (mode == SimMode::kLoss) {
    const auto bad = validate_rebalance(scenario, rebalance);
    if (!bad.empty()) throw Error(ErrorCode::kInvalidInput, "rebalance: " + bad.front().describe());
  } else {
    if (!std::isfinite(w)) throw Error(ErrorCode::kInvalidInput, "w must be finite");
    if (rebalance_period < 1 || boardings_per_step < 1 || sample_every < 1) {
      throw Error(ErrorCode::kInvalidInput, "rebalance period, boardings and bin width must be at least 1");
    }
  }
}

IntVector apportion(int total, const Vector& weights) {
  const auto n = weights.size();
  if (n == 0 || total < 0 || (weights.array() < 0.0).any() || !weights.allFinite()) {
    throw Error(ErrorCode::kInvalidInput, "apportion needs a nonnegative total and weights");
  }
  const double sum = weights.sum();
  const Vector share = sum > 0.0 ? Vector(weights * (total / sum)) : Vector::Constant(n, double(total) / n);
  IntVector out(n);
  std::vector<std::pair<double, Eigen::Index>> rest;
  int given = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i) = static_cast<int>(std::floor(share(i)));
    given += out(i);
    rest.emplace_back(share(i) - out(i), i);
  }
  std::stable_sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < total - given; ++k) ++out(rest[static_cast<std::size_t>(k) % rest.size()].second);
  return out;
}

std::vector<DispatchOrder> rebalance_drivers_step(const StationState& state, const IntVector& target,
                                                  const Matrix& t) {
  const auto n = state.d_u.size();
  if (target.size() != n || t.rows() != n || t.cols() != n || (target.array() < 0).any() ||
      target.sum() != state.d_u.sum()) {
    throw Error(ErrorCode::kInvalidInput, "driver targets must match the idle drivers in size and total");
  }
  const IntVector surplus = state.d_u - target;
  std::vector<DispatchOrder> orders;
  if ((surplus.array() == 0).all()) return orders;
  FlowProblem fp;
  fp.divergence = surplus.cast<double>();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (surplus(i) > 0 && surplus(j) < 0) {
        fp.arcs.push_back({static_cast<int>(i), static_cast<int>(j), t(i, j)});
      }
    }
  }
  const auto sol = solve_min_cost_flow(fp);
  for (std::size_t a = 0; a < fp.arcs.size(); ++a) {
    const auto count = std::lround(sol.flow(static_cast<Eigen::Index>(a)));
    if (count > 0) orders.push_back({fp.arcs[a].from, fp.arcs[a].to, static_cast<int>(count)});
  }
  return orders;
}

double student_t95(int df) {
  if (df < 1) throw Error(ErrorCode::kInvalidInput, "t quantile needs df >= 1");
  return boost::math::quantile(boost::math::students_t(df), 0.975);
}

namespace {

enum class TripKind { kCustomerVehicle, kTaxi, kRebalancing };

struct Trip {
  long step;
  long seq;
  TripKind kind;
  int from;
  int to;
  bool carries_customer;
};

struct LaterTrip {
  bool operator()(const Trip& a, const Trip& b) const { return a.step != b.step ? a.step > b.step : a.seq > b.seq; }
};

class Travel {
 public:
  Travel(const SimConfig& cfg) : t_(cfg.scenario.t), dt_(cfg.dt), model_(cfg.travel) {}

  // Steps until arrival: the travel time rounded to the nearest step, at
  // least one.
  long steps(int i, int j, std::mt19937_64& rng) const {
    double time = t_(i, j);
    if (model_ == TravelModel::kExponential) time = std::exponential_distribution<double>(1.0 / time)(rng);
    return std::max(1L, std::lround(time / dt_));
  }

 private:
  const Matrix& t_;
  double dt_;
  TravelModel model_;
};

class TripQueue {
 public:
  void push(long step, TripKind kind, int from, int to, bool customer) {
    heap_.push({step, seq_++, kind, from, to, customer});
  }
  bool due(long step) const { return !heap_.empty() && heap_.top().step <= step; }
  Trip pop() {
    Trip t = heap_.top();
    heap_.pop();
    return t;
  }

 private:
  std::priority_queue<Trip, std::vector<Trip>, LaterTrip> heap_;
  long seq_ = 0;
};

ReplicaCounts empty_counts(int n) {
  ReplicaCounts c;
  for (Vector* v : {&c.arrivals, &c.served, &c.arrivals1, &c.served1, &c.arrivals2, &c.served2,
                    &c.virtual_arrivals, &c.virtual_served, &c.wait_total, &c.boarded}) {
    *v = Vector::Zero(n);
  }
  return c;
}

std::discrete_distribution<int> row_distribution(const Matrix& m, int i) {
  std::vector<double> w(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) w[static_cast<std::size_t>(j)] = m(i, j);
  return std::discrete_distribution<int>(w.begin(), w.end());
}

template <class Body>
void for_each_replica(int replicas, int jobs, Body body) {
  const int workers = std::min(jobs, replicas);
  if (workers <= 1) {
    for (int r = 0; r < replicas; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(replicas));
  for (int k = 0; k < workers; ++k) {
    pool.emplace_back([&] {
      for (int r = next++; r < replicas; r = next++) {
        try {
          body(r);
        } catch (...) {
          errors[static_cast<std::size_t>(r)] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------- loss mode

ReplicaCounts loss_replica(const SimConfig& cfg, int replica) {
  const Scenario& s = cfg.scenario;
  const RebalanceParams& rp = cfg.rebalance;
  const int n = s.size();
  std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(replica));
  const Travel travel(cfg);
  const long warmup = cfg.warmup_steps();

  // Probability that a customer i -> j is delegated to the taxi system.
  Matrix delegate = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double demand = s.lambda(i) * s.p(i, j);
      if (demand > 0.0) delegate(i, j) = std::clamp(rp.lambda_del(i) * rp.eta(i, j) / demand, 0.0, 1.0);
    }
  }
  std::vector<std::discrete_distribution<int>> dest, vdest;
  std::vector<std::poisson_distribution<int>> real, virt;
  for (int i = 0; i < n; ++i) {
    dest.push_back(row_distribution(s.p, i));
    vdest.push_back(row_distribution(rp.xi, i));
    real.emplace_back(std::max(s.lambda(i) * cfg.dt, 1e-300));
    virt.emplace_back(std::max(rp.psi(i) * cfg.dt, 1e-300));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int customer_fleet = cfg.fleet.customer_fleet();
  IntVector cars = apportion(customer_fleet, s.lambda);
  IntVector taxis = apportion(cfg.fleet.drivers, s.lambda);
  long cars_moving = 0, taxis_moving = 0;
  TripQueue trips;
  ReplicaCounts c = empty_counts(n);

  for (long k = 0; k < cfg.horizon; ++k) {
    while (trips.due(k)) {
      const Trip t = trips.pop();
      if (t.kind == TripKind::kCustomerVehicle) {
        ++cars(t.to);
        --cars_moving;
      } else {
        ++taxis(t.to);
        --taxis_moving;
      }
    }
    const bool record = k >= warmup;
    for (int i = 0; i < n; ++i) {
      if (!(s.lambda(i) > 0.0)) continue;
      const int count = real[static_cast<std::size_t>(i)](rng);
      for (int a = 0; a < count; ++a) {
        const int j = dest[static_cast<std::size_t>(i)](rng);
        const bool taxi = unit(rng) < delegate(i, j);
        IntVector& pool = taxi ? taxis : cars;
        const bool ok = pool(i) > 0;
        if (ok) {
          --pool(i);
          if (taxi) {
            ++taxis_moving;
            trips.push(k + travel.steps(i, j, rng), TripKind::kTaxi, i, j, true);
          } else {
            ++cars_moving;
            trips.push(k + travel.steps(i, j, rng), TripKind::kCustomerVehicle, i, j, true);
          }
        }
        if (!record) continue;
        c.arrivals(i) += 1;
        c.served(i) += ok;
        (taxi ? c.arrivals2 : c.arrivals1)(i) += 1;
        (taxi ? c.served2 : c.served1)(i) += ok;
      }
    }
    for (int i = 0; i < n; ++i) {
      if (!(rp.psi(i) > 0.0)) continue;
      const int count = virt[static_cast<std::size_t>(i)](rng);
      for (int a = 0; a < count; ++a) {
        const int j = vdest[static_cast<std::size_t>(i)](rng);
        const bool ok = taxis(i) > 0;
        if (ok) {
          --taxis(i);
          ++taxis_moving;
          trips.push(k + travel.steps(i, j, rng), TripKind::kRebalancing, i, j, false);
        }
        if (!record) continue;
        c.virtual_arrivals(i) += 1;
        c.virtual_served(i) += ok;
        c.rebalancing_trips += ok;
      }
    }
    if (cars.sum() + cars_moving != customer_fleet || taxis.sum() + taxis_moving != cfg.fleet.drivers ||
        cars.minCoeff() < 0 || taxis.minCoeff() < 0) {
      ++c.invariant_violations;
    }
  }
  return c;
}

// ----------------------------------------------------------- queueing mode

struct Waiting {
  int dest;
  long since;
  bool taxi = false;
};

class ClosedLoop {
 public:
  ClosedLoop(const SimConfig& cfg, int replica)
      : cfg_(cfg),
        s_(cfg.scenario),
        n_(s_.size()),
        rng_(cfg.seed + static_cast<std::uint64_t>(replica)),
        travel_(cfg),
        unassigned_(static_cast<std::size_t>(n_)),
        departing_(static_cast<std::size_t>(n_)) {
    for (int i = 0; i < n_; ++i) {
      dest_.push_back(row_distribution(s_.p, i));
      arrivals_.emplace_back(std::max(s_.lambda(i) * cfg.dt, 1e-300));
    }
    state_ = StationState::empty(n_);
    state_.v_e = apportion(cfg.fleet.customer_fleet(), s_.lambda);
    state_.d_u = apportion(cfg.fleet.drivers, s_.lambda);
    assigned_drivers_ = IntVector::Zero(n_);
    counts_ = empty_counts(n_);
    const long window = cfg.horizon - cfg.warmup_steps();
    bins_ = static_cast<int>((window + cfg.sample_every - 1) / cfg.sample_every);
    bin_sum_ = Matrix::Zero(bins_, n_);
    bin_count_ = Matrix::Zero(bins_, n_);
  }

  void run() {
    for (long k = 0; k < cfg_.horizon; ++k) step(k);
  }

  ReplicaCounts counts() const { return counts_; }

  Matrix wait_series() const {
    Matrix out(bins_, n_);
    for (int b = 0; b < bins_; ++b) {
      for (int i = 0; i < n_; ++i) {
        out(b, i) = bin_count_(b, i) > 0 ? bin_sum_(b, i) / bin_count_(b, i) : std::numeric_limits<double>::quiet_NaN();
      }
    }
    return out;
  }

 private:
  void step(long k) {
    const bool record = k >= cfg_.warmup_steps();
    while (trips_.due(k)) {
      const Trip t = trips_.pop();
      if (t.kind == TripKind::kCustomerVehicle) {
        --state_.v_t(t.from, t.to);
        ++state_.v_e(t.to);
      } else {
        ++state_.d_u(t.to);
      }
      --moving_[static_cast<int>(t.kind)];
      if (t.carries_customer) {
        --in_service_;
        ++delivered_;
      }
      dirty_ = true;
    }
    for (int i = 0; i < n_; ++i) {
      if (!(s_.lambda(i) > 0.0)) continue;
      const int count = arrivals_[static_cast<std::size_t>(i)](rng_);
      for (int a = 0; a < count; ++a) {
        const int j = dest_[static_cast<std::size_t>(i)](rng_);
        unassigned_[static_cast<std::size_t>(i)].push_back({j, k});
        ++state_.c_u(i, j);
        ++arrived_;
        if (record) counts_.arrivals(i) += 1;
        dirty_ = true;
      }
    }
    if (triggered() && dirty_) assign(record);
    for (int i = 0; i < n_; ++i) board(i, k, record);
    if (k > 0 && k % cfg_.rebalance_period == 0) rebalance(k, record);
    check();
  }

  bool triggered() const {
    for (int i = 0; i < n_; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (departing_[ui].empty() && !unassigned_[ui].empty()) return true;
    }
    return false;
  }

  void assign(bool record) {
    const auto ap = build_problem(state_, cfg_.fleet, s_.lambda, cfg_.w);
    const auto sol = solve_assignment(ap);
    dirty_ = false;
    IntMatrix nv = sol.n_v, nd = sol.n_d;
    for (int i = 0; i < n_; ++i) {
      auto& queue = unassigned_[static_cast<std::size_t>(i)];
      std::deque<Waiting> keep;
      for (Waiting& c : queue) {
        const int j = c.dest;
        if (nv(i, j) > 0) {
          --nv(i, j);
          --state_.v_e(i);
          ++state_.v_a(i, j);
          c.taxi = false;
        } else if (nd(i, j) > 0) {
          --nd(i, j);
          --state_.d_u(i);
          ++assigned_drivers_(i);
          c.taxi = true;
        } else {
          keep.push_back(c);
          continue;
        }
        --state_.c_u(i, j);
        departing_[static_cast<std::size_t>(i)].push_back(c);
        if (record) counts_.assigned += 1;
        dirty_ = true;
      }
      queue = std::move(keep);
    }
  }

  void board(int i, long k, bool record) {
    auto& queue = departing_[static_cast<std::size_t>(i)];
    for (int b = 0; b < cfg_.boardings_per_step && !queue.empty(); ++b) {
      const Waiting c = queue.front();
      queue.pop_front();
      const long arrive = k + travel_.steps(i, c.dest, rng_);
      if (c.taxi) {
        --assigned_drivers_(i);
        trips_.push(arrive, TripKind::kTaxi, i, c.dest, true);
        ++moving_[static_cast<int>(TripKind::kTaxi)];
      } else {
        --state_.v_a(i, c.dest);
        ++state_.v_t(i, c.dest);
        trips_.push(arrive, TripKind::kCustomerVehicle, i, c.dest, true);
        ++moving_[static_cast<int>(TripKind::kCustomerVehicle)];
      }
      ++in_service_;
      if (!record) continue;
      const double wait = static_cast<double>(k - c.since) * cfg_.dt;
      counts_.boarded(i) += 1;
      counts_.served(i) += 1;
      counts_.wait_total(i) += wait;
      (c.taxi ? counts_.served2 : counts_.served1)(i) += 1;
      (c.taxi ? counts_.arrivals2 : counts_.arrivals1)(i) += 1;
      const auto bin = static_cast<Eigen::Index>((k - cfg_.warmup_steps()) / cfg_.sample_every);
      bin_sum_(bin, i) += wait;
      bin_count_(bin, i) += 1;
    }
  }

  // Idle drivers are spread in proportion to the customers already waiting
  // plus the arrivals expected over one rebalancing period.
  void rebalance(long k, bool record) {
    const int idle = state_.d_u.sum();
    if (idle == 0) return;
    Vector weight = s_.lambda * (cfg_.rebalance_period * cfg_.dt);
    for (int i = 0; i < n_; ++i) weight(i) += static_cast<double>(unassigned_[static_cast<std::size_t>(i)].size());
    const IntVector target = apportion(idle, weight);
    for (const auto& order : rebalance_drivers_step(state_, target, s_.t)) {
      state_.d_u(order.from) -= order.count;
      for (int c = 0; c < order.count; ++c) {
        trips_.push(k + travel_.steps(order.from, order.to, rng_), TripKind::kRebalancing, order.from, order.to,
                    false);
      }
      moving_[static_cast<int>(TripKind::kRebalancing)] += order.count;
      if (record) counts_.rebalancing_trips += order.count;
      dirty_ = true;
    }
  }

  void check() {
    const long taxis_moving = moving_[static_cast<int>(TripKind::kTaxi)] + moving_[static_cast<int>(TripKind::kRebalancing)];
    const long cars = state_.v_e.sum() + state_.v_a.sum() + state_.v_t.sum();
    const long drivers = state_.d_u.sum() + assigned_drivers_.sum() + taxis_moving;
    long waiting = 0;
    for (int i = 0; i < n_; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      waiting += static_cast<long>(unassigned_[ui].size() + departing_[ui].size());
    }
    const bool counts_ok = state_.v_e.minCoeff() >= 0 && state_.d_u.minCoeff() >= 0 && state_.c_u.minCoeff() >= 0 &&
                           state_.v_a.minCoeff() >= 0 && state_.v_t.minCoeff() >= 0 && assigned_drivers_.minCoeff() >= 0;
    const bool fleet_ok = cars + drivers == cfg_.fleet.vehicles && drivers == cfg_.fleet.drivers;
    if (!counts_ok || !fleet_ok || delivered_ + waiting + in_service_ != arrived_ ||
        moving_[static_cast<int>(TripKind::kCustomerVehicle)] != state_.v_t.sum()) {
      ++counts_.invariant_violations;
    }
  }

  const SimConfig& cfg_;
  const Scenario& s_;
  int n_;
  std::mt19937_64 rng_;
  Travel travel_;
  std::vector<std::discrete_distribution<int>> dest_;
  std::vector<std::poisson_distribution<int>> arrivals_;
  StationState state_;
  IntVector assigned_drivers_;
  std::vector<std::deque<Waiting>> unassigned_;
  std::vector<std::deque<Waiting>> departing_;
  TripQueue trips_;
  long moving_[3] = {0, 0, 0};
  long arrived_ = 0, delivered_ = 0, in_service_ = 0;
  bool dirty_ = true;
  ReplicaCounts counts_;
  int bins_ = 0;
  Matrix bin_sum_, bin_count_;
};

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void add_totals(SimMetrics& m) {
  for (const auto& c : m.replicas) {
    m.arrivals += c.arrivals.sum();
    m.served += c.served.sum();
    m.assigned += c.assigned;
    m.rebalancing_trips += c.rebalancing_trips;
    m.invariant_violations += c.invariant_violations;
  }
  if (m.invariant_violations > 0) {
    m.warnings.push_back(std::to_string(m.invariant_violations) + " steps violated a conservation invariant");
  }
}

// Least-squares slope of y on x over the finite entries; NaN with fewer than
// two points.
double slope(const Vector& x, const Vector& y) {
  std::vector<std::pair<double, double>> pts;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (std::isfinite(y(k))) pts.emplace_back(x(k), y(k));
  }
  if (pts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (const auto& [a, b] : pts) mx += a, my += b;
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [a, b] : pts) sxy += (a - mx) * (b - my), sxx += (a - mx) * (a - mx);
  return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

SimMetrics run_loss_sim(const SimConfig& cfg) {
  if (cfg.mode != SimMode::kLoss) throw Error(ErrorCode::kInvalidInput, "run_loss_sim needs mode loss");
  cfg.validate();
  split_demand(cfg.scenario, cfg.rebalance);  // rejects infeasible delegation
  const int n = cfg.scenario.size();
  SimMetrics m;
  m.mode = SimMode::kLoss;
  m.replicas.resize(static_cast<std::size_t>(cfg.replicas));
  for_each_replica(cfg.replicas, cfg.jobs,
                   [&](int r) { m.replicas[static_cast<std::size_t>(r)] = loss_replica(cfg, r); });

  m.availability = Matrix::Zero(cfg.replicas, n);
  m.availability1 = Matrix::Zero(cfg.replicas, n);
  m.availability2 = Matrix::Zero(cfg.replicas, n);
  for (int r = 0; r < cfg.replicas; ++r) {
    const auto& c = m.replicas[static_cast<std::size_t>(r)];
    for (int i = 0; i < n; ++i) {
      m.availability(r, i) = ratio(c.served(i), c.arrivals(i));
      m.availability1(r, i) = ratio(c.served1(i), c.arrivals1(i));
      m.availability2(r, i) = ratio(c.served2(i), c.arrivals2(i));
    }
  }
  m.mean_availability = m.availability.colwise().mean().transpose();
  m.std_availability = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> xs(m.availability.col(i).data(), m.availability.col(i).data() + cfg.replicas);
    m.std_availability(i) = sample_std(xs);
  }
  add_totals(m);
  m.lost = m.arrivals - m.served;
  for (int i = 0; i < n; ++i) {
    double arrivals = 0.0;
    for (const auto& c : m.replicas) arrivals += c.arrivals(i);
    if (cfg.scenario.lambda(i) > 0.0 && arrivals == 0.0) {
      m.warnings.push_back("station " + std::to_string(i) + " saw no arrivals after warmup");
    }
  }
  return m;
}

SimMetrics run_queueing_sim(const SimConfig& cfg) {
  if (cfg.mode != SimMode::kQueueing) throw Error(ErrorCode::kInvalidInput, "run_queueing_sim needs mode queueing");
  cfg.validate();
  const int n = cfg.scenario.size();
  SimMetrics m;
  m.mode = SimMode::kQueueing;
  m.replicas.resize(static_cast<std::size_t>(cfg.replicas));
  m.wait.resize(static_cast<std::size_t>(cfg.replicas));
  for_each_replica(cfg.replicas, cfg.jobs, [&](int r) {
    ClosedLoop sim(cfg, r);
    sim.run();
    m.replicas[static_cast<std::size_t>(r)] = sim.counts();
    m.wait[static_cast<std::size_t>(r)] = sim.wait_series();
  });

  const auto bins = m.wait.front().rows();
  const long warmup = cfg.warmup_steps();
  m.bin_time.resize(bins);
  for (Eigen::Index b = 0; b < bins; ++b) {
    const double start = static_cast<double>(warmup + b * cfg.sample_every);
    const double end = std::min<double>(start + cfg.sample_every, cfg.horizon);
    m.bin_time(b) = 0.5 * (start + end) * cfg.dt;
  }
  m.mean_wait = Matrix::Zero(bins, n);
  m.std_wait = Matrix::Zero(bins, n);
  m.wait_samples = Matrix::Zero(bins, n);
  for (Eigen::Index b = 0; b < bins; ++b) {
    for (int i = 0; i < n; ++i) {
      std::vector<double> xs;
      for (const auto& w : m.wait) {
        if (std::isfinite(w(b, i))) xs.push_back(w(b, i));
      }
      m.wait_samples(b, i) = static_cast<double>(xs.size());
      if (xs.empty()) continue;
      m.mean_wait(b, i) = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      m.std_wait(b, i) = sample_std(xs);
    }
  }
  m.station_mean_wait = Vector::Zero(n);
  Vector boarded = Vector::Zero(n);
  for (const auto& c : m.replicas) {
    m.station_mean_wait += c.wait_total;
    boarded += c.boarded;
  }
  double worst = -1.0;
  for (int i = 0; i < n; ++i) {
    m.station_mean_wait(i) = ratio(m.station_mean_wait(i), boarded(i));
    if (boarded(i) > 0.0 && m.station_mean_wait(i) > worst) {
      worst = m.station_mean_wait(i);
      m.worst_station = i;
    }
  }

  m.slope = Vector::Constant(cfg.replicas, std::numeric_limits<double>::quiet_NaN());
  if (m.worst_station >= 0) {
    const double cut = 2.0 / 3.0 * cfg.horizon * cfg.dt;
    std::vector<Eigen::Index> tail;
    for (Eigen::Index b = 0; b < bins; ++b) {
      if (m.bin_time(b) >= cut) tail.push_back(b);
    }
    Vector x(static_cast<Eigen::Index>(tail.size()));
    for (std::size_t k = 0; k < tail.size(); ++k) x(static_cast<Eigen::Index>(k)) = m.bin_time(tail[k]);
    std::vector<double> finite;
    for (int r = 0; r < cfg.replicas; ++r) {
      Vector y(x.size());
      for (std::size_t k = 0; k < tail.size(); ++k) {
        y(static_cast<Eigen::Index>(k)) = m.wait[static_cast<std::size_t>(r)](tail[k], m.worst_station);
      }
      m.slope(r) = slope(x, y);
      if (std::isfinite(m.slope(r))) finite.push_back(m.slope(r));
    }
    if (!finite.empty()) {
      m.slope_mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
      const double half = finite.size() > 1 ? student_t95(static_cast<int>(finite.size()) - 1) * sample_std(finite) /
                                                  std::sqrt(static_cast<double>(finite.size()))
                                            : std::numeric_limits<double>::infinity();
      m.slope_low = m.slope_mean - half;
      m.slope_high = m.slope_mean + half;
    }
    if (finite.size() < static_cast<std::size_t>(cfg.replicas)) {
      m.warnings.push_back("worst-station slope undefined in " + std::to_string(cfg.replicas - finite.size()) +
                           " replicas");
    }
  }
  add_totals(m);
  return m;
}

SimMetrics run_simulation(const SimConfig& cfg) {
  return cfg.mode == SimMode::kLoss ? run_loss_sim(cfg) : run_queueing_sim(cfg);
}

}  // namespace modnet
