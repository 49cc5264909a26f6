#pragma once

#include <Eigen/Dense>

#include <string>

namespace cvpm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class SolveState { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string to_string(SolveState s);

// Shared solver result descriptor. The certificate payload depends on the
// outcome: inequality multipliers at an optimum, a Farkas vector y >= 0 with
// G^T y = 0, h^T y < 0 for an infeasible problem, and an improving ray for an
// unbounded one.
struct SolveStatus {
    SolveState state = SolveState::NumericalFailure;
    Vector certificate;
    int iterations = 0;
    double residual = 0.0;
    bool regularized = false;
    int active_set_size = 0;
};

// min c^T x  subject to  G x <= h, x free.
struct LpProblem {
    Vector c;
    Matrix G;
    Vector h;
};

struct LpResult {
    Vector x;
    double objective = 0.0;
    SolveStatus status;
};

// Dense two-phase revised simplex. Dantzig pricing with a Bland fallback
// after a stall threshold, so the method terminates on degenerate problems.
// Optimality is certified by a duality-gap check; infeasibility by an
// explicit Farkas vector.
LpResult solve_lp(const LpProblem& p);

}  // namespace cvpm
