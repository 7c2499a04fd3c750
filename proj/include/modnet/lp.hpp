#pragma once

#include "modnet/scenario.hpp"

namespace modnet {

// minimize cost.x  subject to  a x <= rhs,  lower <= x <= upper.
// Lower bounds must be finite; upper bounds may be +infinity.
struct LinearProgram {
  Vector cost;
  Matrix a;
  Vector rhs;
  Vector lower;
  Vector upper;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

struct LpResult {
  LpStatus status = LpStatus::kIterationLimit;
  Vector x;
  double objective = 0.0;
  int iterations = 0;
};

// Two-phase bounded-variable primal simplex on a dense tableau. Dantzig
// pricing, switching to Bland's rule after a run of degenerate pivots.
LpResult solve_lp(const LinearProgram& lp);

}  // namespace modnet
