#pragma once

#include "cvpm/lifting.hpp"
#include "cvpm/polytope.hpp"
#include "cvpm/qp.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cvpm {

// Horizon, weights and tracking references of the receding-horizon problem.
struct MpcConfig {
    int N = 1;
    Matrix Q;
    Matrix R;
    Vector x_ref;
    Vector u_ref;
    double dt = 0.0;  // sampling time, metadata only
};

// x_{t+1} = A x_t + B u_t + G w_t with w truncated to the support polytope W.
struct LinearSystem {
    Matrix A;
    Matrix B;
    Matrix G;
    Matrix Sigma_w;
    Polytope W{Matrix::Identity(1, 1), Vector::Ones(1)};
};

struct AssumptionCheck {
    std::string name;
    bool passed = false;
    double margin = 0.0;  // smallest slack backing the verdict
    std::string detail;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;
    std::vector<std::string> warnings;

    bool all_passed() const;
    std::string summary() const;
};

// Per-assumption numeric certificates for the given problem data. Never
// throws on a failed assumption; construction of CvpmProblem does.
AssumptionReport validate_assumptions(const LinearSystem& sys, const MpcConfig& cfg,
                                      const Polytope& X_P, const Polytope& U_set,
                                      const Polytope* X_f = nullptr);

// Fixed point of Omega <- X_P  intersect  Pre(Omega) with
// Pre(Omega) = ((Omega - A^N G W) + (-B) U) o A, started from X_P. The
// result is certified to satisfy the terminal invariance inclusion
// A X_f + A^N G W  subset  X_f + (-B) U facet-wise.
Polytope compute_terminal_set(const LinearSystem& sys, int N, const Polytope& X_P,
                              const Polytope& U_set);

enum class StepCase { Safe, Probabilistic };

std::string to_string(StepCase c);

struct StepOutcome {
    StepCase step_case = StepCase::Safe;
    Vector u_applied;
    Vector U_star;
    Vector X_bar;
    std::optional<Vector> xi_star;  // Case-2 auxiliary trajectory
    double p_violation = 0.0;
    double objective = 0.0;
    SolveStatus diagnostics;
};

struct BuildOptions {
    bool strict = true;                       // fail construction on assumption failure
    std::optional<Polytope> pinned_terminal;  // reuse a precomputed X_f
};

// Precomputed controller state: lifted matrices, tightened tube, terminal
// set, feasible-initial-state set, Riccati/Lyapunov solutions and the block
// covariances. Immutable after construction; safe to share across threads.
class CvpmProblem {
public:
    static CvpmProblem build(const LinearSystem& sys, const MpcConfig& cfg,
                             const Polytope& X_P, const Polytope& U_set,
                             const BuildOptions& opts = {});

    // Runtime set updates rebuild the dependent quantities into a new
    // problem. With keep_terminal the precomputed X_f is pinned and only its
    // invariance certificate is re-evaluated; both calls tolerate an empty
    // tube (Case 2 then runs against the declared fallback target).
    CvpmProblem update_disturbance_set(const Polytope& W_new, const Matrix& Sigma_w_new,
                                       bool keep_terminal = true) const;
    CvpmProblem update_state_constraints(const Polytope& X_P_new,
                                         bool keep_terminal = true) const;

    const LinearSystem& system() const { return sys_; }
    const MpcConfig& config() const { return cfg_; }
    const Polytope& state_constraints() const { return X_P_; }
    const Polytope& input_set() const { return U_set_; }
    const LiftedSystem& lifted() const { return lifted_; }
    const Polytope& terminal_set() const { return X_f_; }
    const Polytope& tube() const { return *tube_; }
    bool tube_nonempty() const { return tube_nonempty_; }
    const Polytope& case1_set() const { return *X_C1_; }
    bool case1_set_nonempty() const { return X_C1_nonempty_; }
    const Matrix& terminal_weight() const { return P_; }
    const Matrix& state_covariance() const { return Sigma_x_; }
    const Matrix& feedback_gain() const { return K_; }
    const Matrix& case2_terminal_weight() const { return S_; }
    const BlockCovariance& cov_plain() const { return cov_plain_; }
    const BlockCovariance& cov_adapted() const { return cov_adapted_; }
    const AssumptionReport& report() const { return report_; }

    // Augmented constraint set X_P^{N-1} x X_f (the Monte-Carlo target).
    const Polytope& augmented_constraints() const { return *augmented_; }

    // log of the reporting volume V(X_C1)^N (or the fallback target volume);
    // unset when no 2-D volume is available.
    const std::optional<double>& log_volume() const { return log_volume_; }

    int n_x() const { return static_cast<int>(sys_.A.rows()); }
    int n_u() const { return static_cast<int>(sys_.B.cols()); }
    int horizon() const { return cfg_.N; }

    // Input-sequence box bounds (componentwise support of U_set stacked N
    // times); exact for box input sets.
    const Vector& input_lower() const { return u_lower_; }
    const Vector& input_upper() const { return u_upper_; }

private:
    CvpmProblem() = default;

    LinearSystem sys_{Matrix(), Matrix(), Matrix(), Matrix(),
                      Polytope(Matrix::Identity(1, 1), Vector::Ones(1))};
    MpcConfig cfg_;
    Polytope X_P_{Matrix::Identity(1, 1), Vector::Ones(1)};
    Polytope U_set_{Matrix::Identity(1, 1), Vector::Ones(1)};
    LiftedSystem lifted_;
    Polytope X_f_{Matrix::Identity(1, 1), Vector::Ones(1)};
    std::shared_ptr<const Polytope> augmented_;
    std::shared_ptr<const Polytope> tube_;
    std::shared_ptr<const Polytope> X_C1_;
    bool tube_nonempty_ = false;
    bool X_C1_nonempty_ = false;
    Matrix P_, Sigma_x_, K_, S_;
    BlockCovariance cov_plain_, cov_adapted_;
    AssumptionReport report_;
    Vector u_lower_, u_upper_;
    std::optional<double> log_volume_;
};

// X_C1: projection onto the state of {(x, U) : U in U^N, lifted prediction
// in the tightened tube}.
Polytope compute_case1_set(const CvpmProblem& problem);

// H-rep over input sequences U of {U in U^N : A_lift x + B_lift U in tube}.
Polytope admissible_input_polytope(const CvpmProblem& problem, const Vector& x);

// Safe iff the admissible input polytope is nonempty iff x in X_C1; the two
// tests are cross-checked and disagreement beyond a tolerance band raises
// InternalConsistencyError.
StepCase detect_case(const CvpmProblem& problem, const Vector& x);

StepOutcome solve_case1(const CvpmProblem& problem, const Vector& x,
                        const QpWarmStart* warm = nullptr);
StepOutcome solve_case2(const CvpmProblem& problem, const Vector& x,
                        const QpWarmStart* warm = nullptr);

// 1 - clamp(c' exp(-1/2 (X - xi)^T Sigma^{-1} (X - xi)) V(X_C1)^N, 0, 1)
// with the plain (non-adapted) covariance and the Gaussian density
// normalization c' = ((2 pi)^{n_x N} det Sigma)^{-1/2}.
double approx_violation_probability(const CvpmProblem& problem, const Vector& X_bar,
                                    const Vector& xi);

// One controller step: dispatch on detect_case and delegate. Never fails to
// return an input for states with a nonempty fallback target.
StepOutcome cvpm_step(const CvpmProblem& problem, const Vector& x);

// Case 1: optimal tracking cost at x (including the time-t stage term);
// Case 2: optimal value of the probabilistic program. Diagnostic surface.
double lyapunov_value(const CvpmProblem& problem, const Vector& x);

// Stateful wrapper owning the warm-start workspace; single-owner, not
// shareable across threads (the underlying problem is).
class CvpmController {
public:
    explicit CvpmController(std::shared_ptr<const CvpmProblem> problem)
        : problem_(std::move(problem)) {}

    const CvpmProblem& problem() const { return *problem_; }
    void reset_problem(std::shared_ptr<const CvpmProblem> problem);

    StepOutcome step(const Vector& x);

private:
    std::shared_ptr<const CvpmProblem> problem_;
    std::optional<QpWarmStart> warm_case1_;
};

}  // namespace cvpm
