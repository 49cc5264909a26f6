#pragma once

#include "cvpm/controller.hpp"
#include "cvpm/rng.hpp"

namespace cvpm {

// Rejection sampling of the truncated Gaussian N(0, Sigma_w) restricted to W.
// Throws when the acceptance rate over a probe batch falls below 1e-4.
Vector sample_truncated_gaussian(const Matrix& Sigma_w, const Polytope& W,
                                 RngStream& rng);

// mean + chol * z with z standard normal.
Vector mvn_sample(const Vector& mean, const Matrix& cov_chol, RngStream& rng);

struct McEstimate {
    double p_hat = 0.0;
    int n_samples = 0;
    int n_inside = 0;
    double std_err = 0.0;
};

// Monte-Carlo estimate of Pr(state trajectory outside X_P^{N-1} x X_f) with
// trajectories drawn from N(A_lift x + B_lift U, diag(Sigma_x, ..., Sigma_x)).
// Sample i is a pure function of (rng.seed, rng.counter, i), so passing the
// same base stream evaluates different U with common random numbers.
McEstimate monte_carlo_violation(const CvpmProblem& problem, const Vector& x,
                                 const Vector& U, int n_samples, const RngStream& rng);

// Derivative-free probability minimization over the input sequence:
// Nelder-Mead on the common-random-number Monte-Carlo estimate, iterates
// clamped to the input box. The simplex starts from the Mahalanobis-QP
// minimizer: on the saturated plateau (estimate identically 1 far outside
// the constraints) every input is estimator-optimal, so the incumbent
// tie-break keeps the QP candidate; wherever the estimator discriminates,
// the search genuinely re-optimizes. diagnostics.iterations carries the
// evaluation count; exhausting the budget returns best-so-far flagged via
// diagnostics.residual = 1.
StepOutcome solve_case2_sampling(const CvpmProblem& problem, const Vector& x,
                                 int n_samples, const RngStream& rng,
                                 int max_evaluations = 300,
                                 const StepOutcome* incumbent = nullptr);

}  // namespace cvpm
