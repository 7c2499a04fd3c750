#include "modnet/rebalance_nlp.hpp"

#include "modnet/error.hpp"
#include "modnet/jackson.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <thread>

namespace modnet {

namespace {

// Keeps System 1 rates strictly positive and every taxi row nonempty, so
// both chains stay irreducible for every point in the box.
constexpr double kDelegationMargin = 1e-6;
constexpr double kVirtualFloor = 1e-6;

}  // namespace

struct MmrpModel::SystemState {
  Vector x;  // relative utilizations, x_0 = 1
  double delay = 0.0;
  Vector avail;
  Vector row_delay;  // sum_j F_ij T_ij
  Matrix m;          // d x / d rhs with the pinned row removed
};

MmrpModel::MmrpModel(const Scenario& s, const FleetConfig& fleet, double c)
    : s_(s), n_(s.size()), m1_(fleet.customer_fleet()), m2_(fleet.drivers), c_(c) {
  const double floor = kVirtualFloor * s.lambda.mean() / std::max(1, n_ - 1);
  std::vector<double> lo, hi;
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (i != j && s.lambda(i) * s.p(i, j) > 0.0) {
        beta_arcs_.emplace_back(i, j);
        lo.push_back(0.0);
        hi.push_back((1.0 - kDelegationMargin) * s.lambda(i) * s.p(i, j));
      }
    }
  }
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (i == j) continue;
      alpha_arcs_.emplace_back(i, j);
      lo.push_back(floor);
      hi.push_back(kUnbounded);
    }
  }
  lower_ = Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  upper_ = Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
}

Vector MmrpModel::project(const Vector& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

Vector MmrpModel::pack(const Matrix& beta, const Matrix& alpha) const {
  Vector x(size());
  Eigen::Index k = 0;
  for (auto [i, j] : beta_arcs_) x(k++) = beta(i, j);
  for (auto [i, j] : alpha_arcs_) x(k++) = alpha(i, j);
  return x;
}

void MmrpModel::unpack(const Vector& x, Matrix& beta, Matrix& alpha) const {
  beta = Matrix::Zero(n_, n_);
  alpha = Matrix::Zero(n_, n_);
  Eigen::Index k = 0;
  for (auto [i, j] : beta_arcs_) beta(i, j) = x(k++);
  for (auto [i, j] : alpha_arcs_) alpha(i, j) = x(k++);
}

MmrpModel::SystemState MmrpModel::system(const Matrix& flow, int population) const {
  SystemState st;
  // x^T (diag(rowsum) - F) = 0 with x_0 = 1.
  Matrix b = -flow.transpose();
  b.diagonal() += flow.rowwise().sum();
  b.row(0).setZero();
  b(0, 0) = 1.0;
  st.m = b.partialPivLu().inverse();
  st.x = st.m.col(0);
  st.m.col(0).setZero();
  st.row_delay = (flow.array() * s_.t.array()).rowwise().sum();
  st.delay = st.x.dot(st.row_delay);
  st.avail = station_delay_availability(st.x, st.delay, population);
  return st;
}

namespace {

struct Flows {
  Matrix beta, alpha, f1;
  Vector del, lambda1;
};

}  // namespace

MmrpModel::Eval MmrpModel::evaluate(const Vector& x) const {
  Matrix beta, alpha;
  unpack(x, beta, alpha);
  const Vector del = beta.rowwise().sum();
  const Vector lambda1 = s_.lambda - del;
  Matrix f1 = s_.lambda.asDiagonal() * s_.p - beta;
  f1.diagonal().setZero();
  const auto sys1 = system(f1, m1_);
  const auto sys2 = system(beta + alpha, m2_);

  Eval ev;
  ev.availability1 = sys1.avail;
  ev.availability2 = sys2.avail;
  ev.availability_passenger =
      (sys1.avail.cwiseProduct(lambda1) + sys2.avail.cwiseProduct(del)).cwiseQuotient(s_.lambda);
  ev.cost = (s_.t.array() * alpha.array()).sum();
  ev.taxi_total = sys2.avail.sum();
  ev.objective = ev.cost - c_ * ev.taxi_total;
  ev.residuals.resize(residual_count());
  for (int i = 1; i < n_; ++i) {
    ev.residuals(i - 1) = sys1.x(i) - 1.0;
    ev.residuals(n_ - 2 + i) = ev.availability_passenger(i) - ev.availability_passenger(0);
  }
  return ev;
}

namespace {

// Columns 1..n-1: d A / d x_l; column n: d A / d delay. Central differences.
Matrix mva_sensitivity(const Vector& x, double delay, int population, double step) {
  const auto n = x.size();
  Matrix out = Matrix::Zero(n, n + 1);
  if (population <= 0) return out;
  for (Eigen::Index l = 1; l <= n; ++l) {
    Vector xp = x, xm = x;
    double dp = delay, dm = delay;
    double h = 0.0;
    if (l < n) {
      h = step * std::abs(x(l));
      xp(l) += h;
      xm(l) -= h;
    } else {
      h = step * delay;
      dp += h;
      dm -= h;
    }
    out.col(l) = (station_delay_availability(xp, dp, population) - station_delay_availability(xm, dm, population)) /
                 (2.0 * h);
  }
  return out;
}

}  // namespace

MmrpModel::Linearization MmrpModel::linearize(const Vector& x, double fd_step) const {
  Matrix beta, alpha;
  unpack(x, beta, alpha);
  const Vector del = beta.rowwise().sum();
  const Vector lambda1 = s_.lambda - del;
  Matrix f1 = s_.lambda.asDiagonal() * s_.p - beta;
  f1.diagonal().setZero();
  const auto sys1 = system(f1, m1_);
  const auto sys2 = system(beta + alpha, m2_);

  Linearization lin;
  lin.eval = evaluate(x);
  const Vector& a1 = sys1.avail;
  const Vector& a2 = sys2.avail;

  // For a flow F_ab: d x = -x_a (M_.a - M_.b) and
  // d A = x_a (-(U_.a - U_.b) + S_delay T_ab) with U = (S_x + S_delay w^T) M.
  struct Chain {
    Matrix u;
    Vector s_delay;
  };
  auto chain = [&](const SystemState& st, int population) {
    const Matrix sens = mva_sensitivity(st.x, st.delay, population, fd_step);
    Chain ch;
    ch.s_delay = sens.col(n_);
    ch.u = (sens.leftCols(n_) + ch.s_delay * st.row_delay.transpose()) * st.m;
    return ch;
  };
  const Chain c1 = chain(sys1, m1_);
  const Chain c2 = chain(sys2, m2_);
  auto d_avail = [&](const SystemState& st, const Chain& ch, int a, int b) -> Vector {
    return st.x(a) * (-(ch.u.col(a) - ch.u.col(b)) + ch.s_delay * s_.t(a, b));
  };

  lin.gradient.resize(size());
  lin.jacobian = Matrix::Zero(residual_count(), size());
  auto put_pass = [&](Eigen::Index col, const Vector& d_pass) {
    for (int i = 1; i < n_; ++i) lin.jacobian(n_ - 2 + i, col) = d_pass(i) - d_pass(0);
  };
  Eigen::Index k = 0;
  for (auto [a, b] : beta_arcs_) {
    const Vector da1 = -d_avail(sys1, c1, a, b);
    const Vector da2 = d_avail(sys2, c2, a, b);
    Vector d_pass = (da1.cwiseProduct(lambda1) + da2.cwiseProduct(del)).cwiseQuotient(s_.lambda);
    d_pass(a) += (a2(a) - a1(a)) / s_.lambda(a);
    const Vector dx1 = sys1.x(a) * (sys1.m.col(a) - sys1.m.col(b));
    lin.jacobian.col(k).head(n_ - 1) = dx1.tail(n_ - 1);
    put_pass(k, d_pass);
    lin.gradient(k) = -c_ * da2.sum();
    ++k;
  }
  for (auto [a, b] : alpha_arcs_) {
    const Vector da2 = d_avail(sys2, c2, a, b);
    put_pass(k, da2.cwiseProduct(del).cwiseQuotient(s_.lambda));
    lin.gradient(k) = s_.t(a, b) - c_ * da2.sum();
    ++k;
  }
  return lin;
}

double MmrpModel::merit(const Vector& x, const Vector& multipliers, double rho) const {
  const auto ev = evaluate(x);
  return ev.objective + multipliers.dot(ev.residuals) + 0.5 * rho * ev.residuals.squaredNorm();
}

Vector MmrpModel::merit_gradient(const Vector& x, const Vector& multipliers, double rho, double fd_step) const {
  const auto lin = linearize(x, fd_step);
  return lin.gradient + lin.jacobian.transpose() * (multipliers + rho * lin.eval.residuals);
}

namespace {

double balance_spread(const Scenario& s, const Matrix& beta) {
  Matrix f1 = s.lambda.asDiagonal() * s.p - beta;
  f1.diagonal().setZero();
  const int n = s.size();
  Matrix b = -f1.transpose();
  b.diagonal() += f1.rowwise().sum();
  b.row(0).setZero();
  b(0, 0) = 1.0;
  const Vector x = b.partialPivLu().solve(Vector::Unit(n, 0));
  return (x.maxCoeff() - x.minCoeff()) / x.maxCoeff();
}

// Projected reduced-gradient search. Variables within a hair of a bound are
// held there unless the reduced gradient points inward; the rest move in the
// null space of the residual Jacobian, in coordinates scaled by `scale`.
class Search {
 public:
  Search(const MmrpModel& model, const MmrpConfig& cfg, const Vector& scale)
      : model_(model), cfg_(cfg), scale_(scale) {}

  bool at_lower(const Vector& x, Eigen::Index k) const { return x(k) <= model_.lower()(k) + 1e-12 * scale_(k); }
  bool at_upper(const Vector& x, Eigen::Index k) const { return x(k) >= model_.upper()(k) - 1e-12 * scale_(k); }

  Vector free_weights(const Vector& x) const {
    Vector w = scale_.array().square();
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      if (at_lower(x, k) || at_upper(x, k)) w(k) = 0.0;
    }
    return w;
  }

  // Least-squares multipliers: minimize |W^(1/2) (g + J^T l)|.
  static Vector multipliers(const Matrix& jac, const Vector& g, const Vector& w) {
    const Matrix jw = jac * w.asDiagonal();
    Matrix normal = jw * jac.transpose();
    normal.diagonal().array() += 1e-13 * std::max(1e-300, normal.diagonal().maxCoeff());
    return -normal.ldlt().solve(jw * g);
  }

  // Newton steps of least scaled change back onto the residual manifold.
  bool restore(Vector& x, MmrpModel::Eval& ev, const Matrix* jacobian) const {
    Matrix jac;
    if (jacobian) jac = *jacobian;
    bool fresh = !jacobian;
    double last = kUnbounded;
    for (int it = 0; it < 40; ++it) {
      ev = model_.evaluate(x);
      if (!ev.residuals.allFinite()) return false;
      if (satisfied(ev.residuals)) return true;
      const double norm = ev.residuals.norm();
      if (!fresh && (it % 4 == 3 || norm > 0.5 * last)) {
        jac = model_.linearize(x, cfg_.fd_step).jacobian;
        fresh = true;
      } else if (it == 0 && !jacobian) {
        jac = model_.linearize(x, cfg_.fd_step).jacobian;
      }
      last = norm;
      if (try_newton(x, jac, ev.residuals, norm)) {
        fresh = false;
        continue;
      }
      if (fresh) return false;
      // The chord Jacobian may be stale; retry once with a fresh one.
      jac = model_.linearize(x, cfg_.fd_step).jacobian;
      fresh = true;
      if (!try_newton(x, jac, ev.residuals, norm)) return false;
      fresh = false;
    }
    ev = model_.evaluate(x);
    return satisfied(ev.residuals);
  }

  // Least-change Newton step; variables the step would push through a bound
  // are pinned and the step recomputed. Halves the step until |h| drops.
  bool try_newton(Vector& x, const Matrix& jac, const Vector& h, double norm) const {
    Vector w = free_weights(x);
    Vector step;
    for (int pass = 0; pass < 6; ++pass) {
      const Matrix jw = jac * w.asDiagonal();
      Matrix normal = jw * jac.transpose();
      normal.diagonal().array() += 1e-13 * std::max(1e-300, normal.diagonal().maxCoeff());
      step = -(jw.transpose() * normal.ldlt().solve(h));
      bool pinned = false;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (w(k) > 0.0 && (x(k) + step(k) < model_.lower()(k) || x(k) + step(k) > model_.upper()(k))) {
          w(k) = 0.0;
          pinned = true;
        }
      }
      if (!pinned) break;
    }
    for (double t = 1.0; t > 1e-4; t *= 0.5) {
      const Vector trial = model_.project(x + t * step);
      const auto r = model_.evaluate(trial).residuals;
      if (r.allFinite() && r.norm() < norm) {
        x = trial;
        return true;
      }
    }
    return false;
  }

  bool satisfied(const Vector& h) const {
    const auto half = h.size() / 2;
    return h.head(half).cwiseAbs().maxCoeff() <= 1e-3 * cfg_.eps_feas &&
           h.tail(half).cwiseAbs().maxCoeff() <= 1e-2 * cfg_.eps_a;
  }

  const Vector& scale() const { return scale_; }

 private:
  const MmrpModel& model_;
  const MmrpConfig& cfg_;
  Vector scale_;
};

}  // namespace

MmrpResult solve_mmrp(const Scenario& s, const MmrpConfig& cfg) {
  const auto problems = validate_scenario(s);
  if (!problems.empty()) throw Error(ErrorCode::kInvalidInput, "invalid scenario: " + problems.front().describe());
  cfg.fleet.validate();
  if (!(cfg.c >= 0.0) || !(cfg.eps_feas > 0.0) || !(cfg.eps_a > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "MMRP needs c >= 0 and positive tolerances");
  }
  const int n = s.size();
  MmrpModel model(s, cfg.fleet, cfg.c);

  Matrix beta0, alpha0;
  if (cfg.initial) {
    const auto v = validate_rebalance(s, *cfg.initial);
    if (!v.empty()) throw Error(ErrorCode::kInfeasibleStart, "initial point: " + v.front().describe());
    beta0 = cfg.initial->lambda_del.asDiagonal() * cfg.initial->eta;
    alpha0 = cfg.initial->psi.asDiagonal() * cfg.initial->xi;
  } else {
    const auto mrp = solve_mrp(s);
    beta0 = mrp.beta;
    alpha0 = mrp.alpha;
  }

  // Per-variable scale: the demand cap for beta, a mean per-pair rate for
  // alpha.
  Vector scale(model.size());
  for (Eigen::Index k = 0; k < scale.size(); ++k) {
    scale(k) = std::isfinite(model.upper()(k)) ? model.upper()(k) : s.lambda.mean() / std::max(1, n - 1);
  }
  // Start a little inside the box so every variable can move at first.
  Vector x = model.pack(beta0, alpha0).cwiseMax(model.lower() + 1e-3 * scale).cwiseMin(model.upper() - 1e-3 * scale);

  Search search(model, cfg, scale);
  MmrpResult out;
  MmrpModel::Eval ev;
  const bool have_start = search.restore(x, ev, nullptr);
  out.start_objective = ev.objective;
  out.start_a_star = ev.availability_passenger.mean();

  double step = 1.0;
  Vector prev_x, prev_r;
  std::vector<double> history;
  int it = 0;
  bool stalled = !have_start;
  for (; have_start && it < cfg.max_iterations; ++it) {
    const auto lin = model.linearize(x, cfg.fd_step);
    // Variables close to a bound are pinned while the reduced gradient
    // pushes them outward; the pinned set and multipliers are iterated to
    // agreement.
    Vector w = scale.array().square();
    auto near_lower = [&](Eigen::Index k) { return x(k) <= model.lower()(k) + 1e-4 * scale(k); };
    auto near_upper = [&](Eigen::Index k) { return x(k) >= model.upper()(k) - 1e-4 * scale(k); };
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      if (near_lower(k) || near_upper(k)) w(k) = 0.0;
    }
    Vector lambda, r;
    for (int pass = 0; pass < 8; ++pass) {
      lambda = Search::multipliers(lin.jacobian, lin.gradient, w);
      r = lin.gradient + lin.jacobian.transpose() * lambda;
      bool changed = false;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        const bool pin = (near_lower(k) && r(k) > 0.0) || (near_upper(k) && r(k) < 0.0);
        if (pin != (w(k) == 0.0)) {
          w(k) = pin ? 0.0 : scale(k) * scale(k);
          changed = true;
        }
      }
      if (!changed) break;
    }
    const Vector d = -w.cwiseProduct(r);
    const double stationarity = w.cwiseSqrt().cwiseProduct(r).cwiseAbs().maxCoeff();

    MmrpStep rec;
    rec.iteration = it;
    rec.objective = ev.objective;
    rec.a_star = ev.availability_passenger.mean();
    rec.stationarity = stationarity;
    if (stationarity <= 1e-8 * (1.0 + std::abs(ev.objective))) {
      out.trace.push_back(rec);
      out.converged = true;
      break;
    }
    // Barzilai-Borwein length in scaled coordinates.
    if (prev_x.size()) {
      const Vector sx = x - prev_x;
      const double sty = sx.dot(r - prev_r);
      if (sty > 0.0) step = std::clamp(sx.cwiseQuotient(scale).squaredNorm() / sty, 1e-10, 1e10);
    }
    const double slope = r.dot(d);
    double t = step;
    bool accepted = false;
    Vector trial;
    MmrpModel::Eval trial_ev;
    for (int tries = 0; tries < 40; ++tries, t *= 0.3) {
      trial = model.project(x + t * d);
      if (search.restore(trial, trial_ev, &lin.jacobian) && trial_ev.objective < ev.objective + 1e-4 * t * slope &&
          (cfg.c == 0.0 || !cfg.dominance || trial_ev.availability_passenger.mean() >= out.start_a_star - cfg.eps_a)) {
        accepted = true;
        break;
      }
    }
    rec.step = t;
    out.trace.push_back(rec);
    if (!accepted) {
      stalled = true;
      break;
    }
    prev_x = x;
    prev_r = r;
    x = trial;
    ev = trial_ev;
    history.push_back(ev.objective);
    const std::size_t window = 10;
    if (history.size() > window &&
        history[history.size() - 1 - window] - ev.objective <= 1e-5 * (1.0 + std::abs(ev.objective))) {
      out.converged = true;
      ++it;
      break;
    }
  }

  Matrix beta, alpha;
  model.unpack(x, beta, alpha);
  ev = model.evaluate(x);
  out.beta = beta;
  out.alpha = alpha;
  out.params = RebalanceParams::none(n);
  flows_to_controls(beta, out.params.lambda_del, out.params.eta);
  flows_to_controls(alpha, out.params.psi, out.params.xi);
  out.availability_passenger = ev.availability_passenger;
  out.a_star = ev.availability_passenger.mean();
  out.availability_gap = ev.availability_passenger.maxCoeff() - ev.availability_passenger.minCoeff();
  out.balance_residual = balance_spread(s, beta);
  out.rebalancing_cost = ev.cost;
  out.objective = ev.objective;
  double coupling = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) coupling = std::max(coupling, beta(i, j) - s.lambda(i) * s.p(i, j));
  }
  out.coupling_residual = coupling;
  out.iterations = it;
  for (auto& rec : out.trace) {
    rec.balance_residual = out.balance_residual;
    rec.availability_gap = out.availability_gap;
  }
  if (out.converged) {
    out.status = "converged";
  } else if (stalled) {
    out.status = std::string(to_string(ErrorCode::kNoProgress));
  } else {
    out.status = "IterationLimit";
  }
  return out;
}

std::vector<ParetoPoint> pareto_sweep(const Scenario& s, const MmrpConfig& base, const std::vector<double>& c_list,
                                      int jobs) {
  const std::size_t count = c_list.size();
  std::vector<std::optional<MmrpResult>> res(count);
  std::vector<std::string> errors(count);
  std::vector<bool> moved(count, false);
  auto work = [&](std::size_t k) {
    try {
      MmrpConfig cfg = base;
      cfg.c = c_list[k];
      res[k] = solve_mmrp(s, cfg);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  };
  jobs = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = static_cast<std::size_t>(w); k < count; k += static_cast<std::size_t>(jobs)) work(k);
    });
  }
  for (auto& t : pool) t.join();

  // Independent solves can stop at different local points. The constraints
  // do not depend on c, so a neighbour's solution is feasible at every
  // weight: re-solve from it when it scores better there.
  auto improve = [&](std::size_t k, std::size_t from) {
    if (!res[k] || !res[from]) return;
    MmrpModel model(s, base.fleet, c_list[k]);
    const double cand = model.evaluate(model.pack(res[from]->beta, res[from]->alpha)).objective;
    if (cand >= res[k]->objective - 1e-9 * std::max(1.0, std::abs(res[k]->objective))) return;
    if (base.dominance && res[from]->a_star < res[k]->start_a_star - base.eps_a) return;
    // Fall back to the neighbour's point itself if the warm solve does worse.
    MmrpResult best = *res[from];
    best.objective = cand;
    best.iterations = 0;
    MmrpConfig cfg = base;
    cfg.c = c_list[k];
    cfg.initial = res[from]->params;
    try {
      MmrpResult r = solve_mmrp(s, cfg);
      if (r.objective < cand && (!base.dominance || r.a_star >= res[k]->start_a_star - base.eps_a)) best = std::move(r);
    } catch (const std::exception&) {
    }
    best.start_objective = res[k]->start_objective;
    best.start_a_star = res[k]->start_a_star;
    best.iterations += res[k]->iterations;
    res[k] = std::move(best);
    moved[k] = true;
  };
  for (std::size_t k = 1; k < count; ++k) improve(k, k - 1);
  for (std::size_t k = count; k-- > 1;) improve(k - 1, k);

  std::vector<ParetoPoint> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    ParetoPoint& pt = out[k];
    pt.c = c_list[k];
    pt.error = errors[k];
    if (!res[k]) continue;
    const MmrpResult& r = *res[k];
    pt.rebalancing_cost = r.rebalancing_cost;
    pt.a_star = r.a_star;
    pt.availability_gap = r.availability_gap;
    pt.iterations = r.iterations;
    pt.converged = r.converged;
    pt.status = r.status;
    pt.params = r.params;
    pt.neighbour_start = moved[k];
  }
  return out;
}

}  // namespace modnet
