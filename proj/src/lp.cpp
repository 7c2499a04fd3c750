#include "modnet/lp.hpp"

#include "modnet/error.hpp"

#include <cmath>
#include <limits>

namespace modnet {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

class Tableau {
 public:
  explicit Tableau(const LinearProgram& lp) : m_(lp.a.rows()), n_(lp.a.cols()) {
    // Columns: structurals, slacks, then one artificial per row that starts
    // infeasible.
    const Vector residual = lp.rhs - lp.a * lp.lower;
    std::vector<Eigen::Index> art_rows;
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (residual(i) < 0.0) art_rows.push_back(i);
    }
    cols_ = n_ + m_ + static_cast<Eigen::Index>(art_rows.size());
    t_ = Matrix::Zero(m_, cols_);
    lo_ = Vector::Zero(cols_);
    hi_ = Vector::Constant(cols_, kInf);
    lo_.head(n_) = lp.lower;
    hi_.head(n_) = lp.upper;
    value_ = lo_;
    basis_.assign(static_cast<std::size_t>(m_), 0);
    is_basic_.assign(static_cast<std::size_t>(cols_), -1);
    for (Eigen::Index i = 0; i < m_; ++i) {
      t_.row(i).head(n_) = lp.a.row(i);
      t_(i, n_ + i) = 1.0;
    }
    first_art_ = n_ + m_;
    for (std::size_t k = 0; k < art_rows.size(); ++k) {
      const Eigen::Index i = art_rows[k];
      const Eigen::Index col = first_art_ + static_cast<Eigen::Index>(k);
      t_(i, col) = -1.0;
      // Basis column is -e_i: multiply the row by -1.
      t_.row(i) *= -1.0;
      set_basic(i, col);
      value_(col) = -residual(i);
    }
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (residual(i) >= 0.0) {
        set_basic(i, n_ + i);
        value_(n_ + i) = residual(i);
      }
    }
  }

  // Minimizes c over all columns; returns kOptimal, kUnbounded or
  // kIterationLimit.
  LpStatus run(const Vector& c, int& iterations, int limit) {
    Vector d = c;
    for (Eigen::Index i = 0; i < m_; ++i) d -= c(basis_[static_cast<std::size_t>(i)]) * t_.row(i).transpose();
    int degenerate = 0;
    while (true) {
      if (iterations >= limit) return LpStatus::kIterationLimit;
      const bool bland = degenerate > 50;
      Eigen::Index q = -1;
      double best = 0.0;
      for (Eigen::Index j = 0; j < cols_; ++j) {
        if (is_basic_[static_cast<std::size_t>(j)] >= 0 || lo_(j) == hi_(j)) continue;
        const bool at_upper = value_(j) == hi_(j);
        const double gain = at_upper ? d(j) : -d(j);
        if (gain <= kCostTol) continue;
        if (bland) {
          q = j;
          break;
        }
        if (gain > best) {
          best = gain;
          q = j;
        }
      }
      if (q < 0) return LpStatus::kOptimal;
      ++iterations;

      const double sigma = value_(q) == hi_(q) ? -1.0 : 1.0;
      double step = hi_(q) - lo_(q);
      Eigen::Index leave = -1;
      bool leave_to_upper = false;
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double alpha = sigma * t_(i, q);
        const Eigen::Index b = basis_[static_cast<std::size_t>(i)];
        double limit_i = kInf;
        bool upper = false;
        if (alpha > kPivotTol) {
          limit_i = (value_(b) - lo_(b)) / alpha;
        } else if (alpha < -kPivotTol && std::isfinite(hi_(b))) {
          limit_i = (hi_(b) - value_(b)) / -alpha;
          upper = true;
        } else {
          continue;
        }
        limit_i = std::max(0.0, limit_i);
        if (limit_i < step || (limit_i == step && leave >= 0 && b < basis_[static_cast<std::size_t>(leave)])) {
          step = limit_i;
          leave = i;
          leave_to_upper = upper;
        }
      }
      if (!std::isfinite(step)) return LpStatus::kUnbounded;
      degenerate = step <= 1e-12 ? degenerate + 1 : 0;

      for (Eigen::Index i = 0; i < m_; ++i) value_(basis_[static_cast<std::size_t>(i)]) -= sigma * step * t_(i, q);
      value_(q) += sigma * step;
      if (leave < 0) {
        value_(q) = sigma > 0 ? hi_(q) : lo_(q);  // bound flip
        continue;
      }
      const Eigen::Index out = basis_[static_cast<std::size_t>(leave)];
      value_(out) = leave_to_upper ? hi_(out) : lo_(out);
      pivot(leave, q, d);
    }
  }

  void pivot(Eigen::Index r, Eigen::Index q, Vector& d) {
    t_.row(r) /= t_(r, q);
    const Vector col = t_.col(q);
    const Eigen::RowVectorXd row = t_.row(r);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (i != r && col(i) != 0.0) t_.row(i) -= col(i) * row;
    }
    d -= d(q) * row.transpose();
    is_basic_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(r)])] = -1;
    set_basic(r, q);
  }

  Eigen::Index first_artificial() const { return first_art_; }
  Eigen::Index columns() const { return cols_; }
  Vector& upper() { return hi_; }
  const Vector& values() const { return value_; }

 private:
  void set_basic(Eigen::Index row, Eigen::Index col) {
    basis_[static_cast<std::size_t>(row)] = col;
    is_basic_[static_cast<std::size_t>(col)] = static_cast<int>(row);
  }

  Eigen::Index m_, n_, cols_ = 0, first_art_ = 0;
  Matrix t_;
  Vector lo_, hi_, value_;
  std::vector<Eigen::Index> basis_;
  std::vector<int> is_basic_;
};

}  // namespace

LpResult solve_lp(const LinearProgram& lp) {
  const auto n = lp.a.cols();
  if (lp.cost.size() != n || lp.lower.size() != n || lp.upper.size() != n || lp.rhs.size() != lp.a.rows()) {
    throw Error(ErrorCode::kInvalidInput, "linear program dimensions disagree");
  }
  if (!lp.lower.allFinite() || (lp.upper.array() < lp.lower.array()).any()) {
    throw Error(ErrorCode::kInvalidInput, "linear program bounds must be finite below and ordered");
  }
  LpResult out;
  Tableau tab(lp);
  const int limit = 50 * static_cast<int>(lp.a.rows() + tab.columns()) + 1000;

  const Eigen::Index first_art = tab.first_artificial();
  if (first_art < tab.columns()) {
    Vector phase1 = Vector::Zero(tab.columns());
    phase1.tail(tab.columns() - first_art).setOnes();
    out.status = tab.run(phase1, out.iterations, limit);
    if (out.status == LpStatus::kIterationLimit) return out;
    const double infeasibility = tab.values().tail(tab.columns() - first_art).sum();
    const double scale = 1.0 + lp.rhs.cwiseAbs().maxCoeff();
    if (infeasibility > 1e-9 * scale) {
      out.status = LpStatus::kInfeasible;
      return out;
    }
    tab.upper().tail(tab.columns() - first_art).setZero();
  }
  Vector phase2 = Vector::Zero(tab.columns());
  phase2.head(n) = lp.cost;
  out.status = tab.run(phase2, out.iterations, limit);
  out.x = tab.values().head(n);
  out.objective = lp.cost.dot(out.x);
  return out;
}

}  // namespace modnet
