#include "modnet/assignment.hpp"

#include "modnet/error.hpp"
#include "modnet/lp.hpp"

#include <cmath>
#include <limits>
#include <queue>

namespace modnet {

StationState StationState::empty(int n) {
  StationState s;
  s.v_e = IntVector::Zero(n);
  s.d_u = IntVector::Zero(n);
  s.c_u = IntMatrix::Zero(n, n);
  s.v_t = IntMatrix::Zero(n, n);
  s.v_a = IntMatrix::Zero(n, n);
  return s;
}

void StationState::validate() const {
  const auto n = v_e.size();
  if (d_u.size() != n || c_u.rows() != n || c_u.cols() != n || v_t.rows() != n || v_t.cols() != n ||
      v_a.rows() != n || v_a.cols() != n) {
    throw Error(ErrorCode::kInvalidInput, "station state dimensions disagree");
  }
  if (v_e.minCoeff() < 0 || d_u.minCoeff() < 0 || c_u.minCoeff() < 0 || v_t.minCoeff() < 0 || v_a.minCoeff() < 0) {
    throw Error(ErrorCode::kInvalidInput, "station state counts must be nonnegative");
  }
  if (c_u.diagonal().cwiseAbs().maxCoeff() > 0) {
    throw Error(ErrorCode::kInvalidInput, "customers cannot travel to their own station");
  }
}

Vector AssignmentProblem::predicted(const IntMatrix& n_v) const {
  const IntVector net = n_v.colwise().sum().transpose() - n_v.rowwise().sum();
  return base + net.cast<double>();
}

double AssignmentProblem::objective(const IntMatrix& n_v, const IntMatrix& n_d) const {
  return (predicted(n_v) - v_des).cwiseAbs().sum() - w * static_cast<double>(n_v.sum() + n_d.sum());
}

bool AssignmentProblem::feasible(const IntMatrix& n_v, const IntMatrix& n_d) const {
  const auto n = state.size();
  if (n_v.rows() != n || n_v.cols() != n || n_d.rows() != n || n_d.cols() != n) return false;
  if (n_v.minCoeff() < 0 || n_d.minCoeff() < 0) return false;
  if (((n_v + n_d).array() > state.c_u.array()).any()) return false;
  if ((n_v.rowwise().sum().array() > state.v_e.array()).any()) return false;
  return !(n_d.rowwise().sum().array() > state.d_u.array()).any();
}

int AssignmentProblem::formulation_variables() const {
  const int n = state.size();
  return 2 * n * n + n;
}

AssignmentProblem build_problem(const StationState& state, const FleetConfig& fleet, const Vector& lambda, double w) {
  state.validate();
  fleet.validate();
  if (lambda.size() != state.size() || (lambda.array() < 0.0).any() || !(lambda.sum() > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "arrival rates must be nonnegative with a positive sum");
  }
  AssignmentProblem ap;
  ap.state = state;
  ap.w = w;
  ap.v_des = fleet.customer_fleet() * lambda / lambda.sum();
  ap.base = (state.v_e + (state.v_a + state.v_t).colwise().sum().transpose()).cast<double>();
  return ap;
}

namespace {

// For fixed self-drive assignments the taxi variables enter only through
// their total per origin, capped by the drivers and by the customers left
// over. The relaxation therefore works with n_v(i, j) per active pair, one
// taxi total t_i per station and the deviation slacks e_i.
struct Reduced {
  LinearProgram lp;
  std::vector<std::pair<int, int>> pairs;
  int n = 0;
  int integer_count = 0;
};

Reduced reduce(const AssignmentProblem& ap) {
  const auto& st = ap.state;
  Reduced r;
  r.n = st.size();
  const int n = r.n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (st.c_u(i, j) > 0 && st.v_e(i) > 0) r.pairs.emplace_back(i, j);
    }
  }
  const int np = static_cast<int>(r.pairs.size());
  const int vars = np + 2 * n;
  r.integer_count = np + n;
  auto& lp = r.lp;
  lp.cost = Vector::Zero(vars);
  lp.lower = Vector::Zero(vars);
  lp.upper = Vector::Constant(vars, std::numeric_limits<double>::infinity());
  lp.a = Matrix::Zero(5 * n, vars);
  lp.rhs = Vector::Zero(5 * n);
  const IntVector customers = st.c_u.rowwise().sum();
  const Vector dev = ap.base - ap.v_des;
  // On integers |v - v_des| equals its interpolation between floor(v_des)
  // and floor(v_des) + 1; the chord through those points tightens the bound.
  Vector slope(n), chord_rhs(n);
  for (int i = 0; i < n; ++i) {
    const double a = ap.v_des(i), fl = std::floor(a);
    slope(i) = 2.0 * fl + 1.0 - 2.0 * a;
    chord_rhs(i) = -(a - fl) - slope(i) * (ap.base(i) - fl);
  }
  for (int k = 0; k < np; ++k) {
    const auto [i, j] = r.pairs[static_cast<std::size_t>(k)];
    lp.cost(k) = -ap.w;
    lp.upper(k) = std::min(st.c_u(i, j), st.v_e(i));
    lp.a(i, k) = 1.0;          // vehicles leaving i
    lp.a(n + i, k) = 1.0;      // customers served at i
    lp.a(2 * n + i, k) = -1.0;  // v+ - v_des <= e
    lp.a(2 * n + j, k) = 1.0;
    lp.a(3 * n + i, k) = 1.0;  // v_des - v+ <= e
    lp.a(3 * n + j, k) = -1.0;
    lp.a(4 * n + i, k) = -slope(i);
    lp.a(4 * n + j, k) = slope(j);
  }
  for (int i = 0; i < n; ++i) {
    const int t = np + i, e = np + n + i;
    lp.cost(t) = -ap.w;
    lp.upper(t) = std::min(st.d_u(i), customers(i));
    lp.a(n + i, t) = 1.0;
    lp.cost(e) = 1.0;
    lp.a(2 * n + i, e) = -1.0;
    lp.a(3 * n + i, e) = -1.0;
    lp.a(4 * n + i, e) = -1.0;
    lp.rhs(i) = st.v_e(i);
    lp.rhs(n + i) = customers(i);
    lp.rhs(2 * n + i) = -dev(i);
    lp.rhs(3 * n + i) = dev(i);
    lp.rhs(4 * n + i) = chord_rhs(i);
  }
  return r;
}

struct BranchNode {
  Vector lower, upper;
  Vector x;
  double bound = 0.0;
  int id = 0;
};

struct Worse {
  bool operator()(const BranchNode& a, const BranchNode& b) const {
    return a.bound != b.bound ? a.bound > b.bound : a.id > b.id;
  }
};

// Given n_v, each origin takes as many taxi rides as drivers and remaining
// customers allow when w > 0 and none otherwise. Rides are spread over
// destinations from the last one backwards, which gives the
// lexicographically smallest n_d among the optimal completions.
IntMatrix fill_taxis(const AssignmentProblem& ap, const IntMatrix& n_v) {
  const auto& st = ap.state;
  const int n = st.size();
  IntMatrix n_d = IntMatrix::Zero(n, n);
  if (!(ap.w > 0.0)) return n_d;
  for (int i = 0; i < n; ++i) {
    int left = std::min(st.d_u(i), st.c_u.row(i).sum() - n_v.row(i).sum());
    for (int j = n - 1; j >= 0 && left > 0; --j) {
      n_d(i, j) = std::min(left, st.c_u(i, j) - n_v(i, j));
      left -= n_d(i, j);
    }
  }
  return n_d;
}

// Rounds the relaxation down and then applies single-unit self-drive moves
// while they improve the objective.
struct Rounded {
  IntMatrix n_v, n_d;
  double value = 0.0;
};

Rounded round_and_improve(const AssignmentProblem& ap, const Reduced& r, const Vector& x) {
  const auto& st = ap.state;
  const int n = r.n;
  IntMatrix n_v = IntMatrix::Zero(n, n);
  for (std::size_t k = 0; k < r.pairs.size(); ++k) {
    n_v(r.pairs[k].first, r.pairs[k].second) =
        static_cast<int>(std::floor(x(static_cast<Eigen::Index>(k)) + 1e-6));
  }
  const IntVector customers = st.c_u.rowwise().sum();
  IntVector out = n_v.rowwise().sum();
  Vector v = ap.predicted(n_v);
  auto taxis = [&](int i, int served) { return ap.w > 0.0 ? std::min(st.d_u(i), customers(i) - served) : 0; };
  auto delta = [&](int i, int j, int s) {
    const double dv = std::abs(v(i) - s - ap.v_des(i)) - std::abs(v(i) - ap.v_des(i)) +
                      std::abs(v(j) + s - ap.v_des(j)) - std::abs(v(j) - ap.v_des(j));
    const int dt = taxis(i, out(i) + s) - taxis(i, out(i));
    return dv - ap.w * (s + dt);
  };
  while (true) {
    double best = -1e-12;
    std::size_t pick = 0;
    int sign = 0;
    for (std::size_t k = 0; k < r.pairs.size(); ++k) {
      const auto [i, j] = r.pairs[k];
      if (n_v(i, j) < st.c_u(i, j) && out(i) < st.v_e(i)) {
        const double d = delta(i, j, 1);
        if (d < best) best = d, pick = k, sign = 1;
      }
      if (n_v(i, j) > 0) {
        const double d = delta(i, j, -1);
        if (d < best) best = d, pick = k, sign = -1;
      }
    }
    if (sign == 0) break;
    const auto [i, j] = r.pairs[pick];
    n_v(i, j) += sign;
    out(i) += sign;
    v(i) -= sign;
    v(j) += sign;
  }
  Rounded res;
  res.n_d = fill_taxis(ap, n_v);
  res.n_v = std::move(n_v);
  res.value = ap.objective(res.n_v, res.n_d);
  return res;
}

}  // namespace

AssignmentSolution solve_assignment(const AssignmentProblem& ap) {
  ap.state.validate();
  const Reduced r = reduce(ap);
  const int n = r.n;
  AssignmentSolution out;
  out.n_v = IntMatrix::Zero(n, n);
  out.n_d = IntMatrix::Zero(n, n);
  out.objective = ap.objective(out.n_v, out.n_d);  // all-zero is always feasible

  constexpr double kIntTol = 1e-6;
  constexpr double kPrune = 1e-9;
  int next_id = 0;
  std::priority_queue<BranchNode, std::vector<BranchNode>, Worse> open;
  auto push = [&](Vector lower, Vector upper) {
    LinearProgram lp = r.lp;
    lp.lower = std::move(lower);
    lp.upper = std::move(upper);
    const auto res = solve_lp(lp);
    out.lp_iterations += res.iterations;
    ++out.nodes;
    if (res.status == LpStatus::kInfeasible) return;
    if (res.status != LpStatus::kOptimal) {
      throw Error(ErrorCode::kNoProgress, "assignment relaxation did not solve");
    }
    if (res.objective >= out.objective - kPrune) return;
    auto rounded = round_and_improve(ap, r, res.x);
    if (rounded.value < out.objective - kPrune) {
      out.objective = rounded.value;
      out.n_v = std::move(rounded.n_v);
      out.n_d = std::move(rounded.n_d);
      if (res.objective >= out.objective - kPrune) return;
    }
    open.push(BranchNode{std::move(lp.lower), std::move(lp.upper), res.x, res.objective, next_id++});
  };
  push(r.lp.lower, r.lp.upper);

  while (!open.empty()) {
    BranchNode node = open.top();
    open.pop();
    if (node.bound >= out.objective - kPrune) break;
    Eigen::Index branch = -1;
    double best = 1.0;
    for (Eigen::Index k = 0; k < r.integer_count; ++k) {
      const double frac = node.x(k) - std::floor(node.x(k));
      if (frac <= kIntTol || frac >= 1.0 - kIntTol) continue;
      const double distance = std::abs(frac - 0.5);
      if (distance < best) {
        best = distance;
        branch = k;
      }
    }
    if (branch < 0) {
      IntMatrix n_v = IntMatrix::Zero(n, n);
      for (std::size_t k = 0; k < r.pairs.size(); ++k) {
        n_v(r.pairs[k].first, r.pairs[k].second) = static_cast<int>(std::lround(node.x(static_cast<Eigen::Index>(k))));
      }
      IntMatrix n_d = fill_taxis(ap, n_v);
      const double value = ap.objective(n_v, n_d);
      if (value < out.objective - kPrune) {
        out.objective = value;
        out.n_v = n_v;
        out.n_d = n_d;
      }
      continue;
    }
    Vector down = node.upper;
    down(branch) = std::floor(node.x(branch));
    push(node.lower, down);
    Vector up = node.lower;
    up(branch) = std::ceil(node.x(branch));
    push(up, node.upper);
  }
  out.bound = open.empty() ? out.objective : std::min(out.objective, open.top().bound);
  return out;
}

}  // namespace modnet
