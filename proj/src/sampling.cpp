#include "cvpm/sampling.hpp"

#include "cvpm/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace cvpm {

Vector sample_truncated_gaussian(const Matrix& Sigma_w, const Polytope& W,
                                 RngStream& rng) {
    Eigen::LLT<Matrix> llt(Sigma_w);
    if (llt.info() != Eigen::Success)
        throw InvalidInputError("sample_truncated_gaussian: Sigma_w not positive definite");
    const Matrix L = llt.matrixL();
    const int n = static_cast<int>(Sigma_w.rows());
    const int probe = 10000;
    for (int attempt = 0; attempt < probe; ++attempt) {
        Vector z(n);
        for (int i = 0; i < n; ++i) z(i) = rng.next_normal();
        Vector w = L * z;
        if (W.contains(w, 0.0)) return w;
    }
    throw SolverFailureError(
        "sample_truncated_gaussian: acceptance rate below 1e-4 over a probe batch");
}

Vector mvn_sample(const Vector& mean, const Matrix& cov_chol, RngStream& rng) {
    if (cov_chol.rows() != mean.size())
        throw InvalidInputError("mvn_sample: shape mismatch");
    Vector z(cov_chol.cols());
    for (int i = 0; i < z.size(); ++i) z(i) = rng.next_normal();
    return mean + cov_chol * z;
}

McEstimate monte_carlo_violation(const CvpmProblem& problem, const Vector& x,
                                 const Vector& U, int n_samples, const RngStream& rng) {
    if (n_samples < 100)
        throw InvalidInputError("monte_carlo_violation: need at least 100 samples");
    const LiftedSystem& L = problem.lifted();
    const Vector mean = predict_mean(L, x, U);
    Eigen::LLT<Matrix> llt(problem.state_covariance());
    if (llt.info() != Eigen::Success)
        throw InvalidInputError("monte_carlo_violation: singular state covariance");
    const Matrix chol = llt.matrixL();
    const int N = L.N, nx = L.n_x;
    const Polytope& X_P = problem.state_constraints();
    const Polytope& X_f = problem.terminal_set();

    int inside = 0;
    for (int s = 0; s < n_samples; ++s) {
        RngStream draw = rng.substream(static_cast<std::uint64_t>(s));
        bool ok = true;
        for (int k = 0; k < N && ok; ++k) {
            Vector z(nx);
            for (int i = 0; i < nx; ++i) z(i) = draw.next_normal();
            const Vector pt = mean.segment(k * nx, nx) + chol * z;
            const Polytope& target = (k + 1 < N) ? X_P : X_f;
            ok = target.contains(pt, 0.0);
        }
        if (ok) ++inside;
    }
    McEstimate est;
    est.n_samples = n_samples;
    est.n_inside = inside;
    est.p_hat = 1.0 - static_cast<double>(inside) / n_samples;
    est.std_err = std::sqrt(est.p_hat * (1.0 - est.p_hat) / n_samples);
    return est;
}

namespace {

struct SimplexPoint {
    Vector u;
    double value = 0.0;
};

}  // namespace

StepOutcome solve_case2_sampling(const CvpmProblem& problem, const Vector& x,
                                 int n_samples, const RngStream& rng,
                                 int max_evaluations, const StepOutcome* incumbent) {
    const int nU = problem.horizon() * problem.n_u();
    const Vector& lo = problem.input_lower();
    const Vector& hi = problem.input_upper();

    auto clamp_box = [&](const Vector& u) {
        return u.cwiseMax(lo).cwiseMin(hi).eval();
    };

    int evaluations = 0;
    auto objective = [&](const Vector& u) {
        ++evaluations;
        return monte_carlo_violation(problem, x, clamp_box(u), n_samples, rng).p_hat;
    };

    // Incumbent: the quadratic-program minimizer (see header note).
    StepOutcome qp_outcome = incumbent ? *incumbent : solve_case2(problem, x);
    Vector best_u = clamp_box(qp_outcome.U_star);
    double best_val = objective(best_u);

    // Initial simplex around the incumbent.
    std::vector<SimplexPoint> simplex;
    simplex.push_back({best_u, best_val});
    for (int i = 0; i < nU; ++i) {
        Vector u = best_u;
        const double span = hi(i) - lo(i);
        const double delta = 0.15 * span;
        u(i) = (u(i) + delta <= hi(i)) ? u(i) + delta : u(i) - delta;
        simplex.push_back({clamp_box(u), objective(u)});
    }

    const double alpha = 1.0, gamma = 2.0, beta = 0.5, shrink = 0.5;
    bool exhausted = false;
    while (true) {
        if (evaluations >= max_evaluations) {
            exhausted = true;
            break;
        }
        std::sort(simplex.begin(), simplex.end(),
                  [](const SimplexPoint& a, const SimplexPoint& b) {
                      return a.value < b.value;
                  });
        if (simplex.front().value < best_val) {
            best_val = simplex.front().value;
            best_u = simplex.front().u;
        }
        if (simplex.front().value <= 0.0) break;  // estimator floor reached
        const double spread = simplex.back().value - simplex.front().value;
        if (spread <= 1e-12 && simplex.front().value >= 1.0) break;  // saturated plateau
        if (spread <= 1e-9) {
            double width = 0.0;
            for (const auto& p : simplex)
                width = std::max(width, (p.u - simplex.front().u).cwiseAbs().maxCoeff());
            if (width <= 1e-6) break;
        }

        Vector centroid = Vector::Zero(nU);
        for (size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i].u;
        centroid /= static_cast<double>(simplex.size() - 1);
        const SimplexPoint& worst = simplex.back();

        Vector refl = clamp_box(centroid + alpha * (centroid - worst.u));
        const double f_refl = objective(refl);
        if (f_refl < simplex.front().value) {
            Vector exp_pt = clamp_box(centroid + gamma * (refl - centroid));
            const double f_exp = objective(exp_pt);
            simplex.back() = (f_exp < f_refl) ? SimplexPoint{exp_pt, f_exp}
                                              : SimplexPoint{refl, f_refl};
        } else if (f_refl < simplex[simplex.size() - 2].value) {
            simplex.back() = {refl, f_refl};
        } else {
            Vector con = clamp_box(centroid + beta * (worst.u - centroid));
            const double f_con = objective(con);
            if (f_con < worst.value) {
                simplex.back() = {con, f_con};
            } else {
                for (size_t i = 1; i < simplex.size(); ++i) {
                    simplex[i].u = clamp_box(simplex.front().u +
                                             shrink * (simplex[i].u - simplex.front().u));
                    simplex[i].value = objective(simplex[i].u);
                    if (evaluations >= max_evaluations) break;
                }
            }
        }
    }
    std::sort(simplex.begin(), simplex.end(),
              [](const SimplexPoint& a, const SimplexPoint& b) {
                  return a.value < b.value;
              });
    if (simplex.front().value < best_val) {
        best_val = simplex.front().value;
        best_u = simplex.front().u;
    }

    StepOutcome out;
    out.step_case = StepCase::Probabilistic;
    out.U_star = best_u;
    out.u_applied = best_u.head(problem.n_u());
    out.X_bar = predict_mean(problem.lifted(), x, best_u);
    out.p_violation = best_val;
    out.objective = best_val;
    out.diagnostics.state = SolveState::Optimal;
    out.diagnostics.iterations = evaluations;
    out.diagnostics.residual = exhausted ? 1.0 : 0.0;
    return out;
}

}  // namespace cvpm
