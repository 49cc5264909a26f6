#pragma once

#include "cvpm/lp.hpp"

#include <optional>
#include <vector>

namespace cvpm {

// min 1/2 z^T H z + f^T z  subject to  G z <= h.
// H must be symmetric to 1e-10 and PSD up to a -1e-9 eigenvalue tolerance;
// equality constraints are expected to have been eliminated by substitution
// before reaching the solver.
struct QpProblem {
    Matrix H;
    Vector f;
    Matrix G;
    Vector h;
};

struct QpWarmStart {
    Vector z;
    std::vector<int> active;
};

struct QpResult {
    Vector z;
    double objective = 0.0;
    SolveStatus status;  // certificate carries the KKT multipliers
};

// Primal active-set method. Near-singular H is lifted by a 1e-9 ridge on its
// null directions (flagged in status.regularized). Deterministic pivoting:
// identical inputs give identical outputs.
QpResult solve_qp(const QpProblem& p, const QpWarmStart* warm = nullptr);

// Max of stationarity, primal violation, multiplier negativity and
// complementarity-slackness norms at (z, lambda).
double kkt_residual(const QpProblem& p, const Vector& z, const Vector& lambda);

}  // namespace cvpm
