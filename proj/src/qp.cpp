#include "cvpm/qp.hpp"

#include "cvpm/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cvpm {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kStepTol = 1e-11;
constexpr double kMultTol = 1e-9;

struct WorkingSet {
    std::vector<int> rows;  // sorted insertion order

    bool contains(int i) const {
        return std::find(rows.begin(), rows.end(), i) != rows.end();
    }
};

}  // namespace

double kkt_residual(const QpProblem& p, const Vector& z, const Vector& lambda) {
    const Vector grad = p.H * z + p.f + p.G.transpose() * lambda;
    double stat = grad.cwiseAbs().maxCoeff();
    double primal = 0.0, comp = 0.0, dual = 0.0;
    const Vector slack = p.G * z - p.h;
    for (int i = 0; i < slack.size(); ++i) {
        primal = std::max(primal, slack(i));
        comp = std::max(comp, std::abs(lambda(i) * slack(i)));
        dual = std::max(dual, -lambda(i));
    }
    return std::max({stat, primal, comp, dual});
}

QpResult solve_qp(const QpProblem& p, const QpWarmStart* warm) {
    const int n = static_cast<int>(p.H.rows());
    const int m = static_cast<int>(p.G.rows());
    if (p.H.cols() != n || p.f.size() != n || p.G.cols() != n || p.h.size() != m)
        throw InvalidInputError("solve_qp: inconsistent shapes");
    if ((p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + p.H.cwiseAbs().maxCoeff()))
        throw InvalidInputError("solve_qp: H not symmetric");

    QpResult out;
    Matrix H = 0.5 * (p.H + p.H.transpose());

    // PSD check and ridge regularization of null directions. The ridge is a
    // plain 1e-9 lift of the small eigenvalues: along exact null directions
    // the objective is flat, so the lifted problem shares its minimizers and
    // the stationarity perturbation stays at ~1e-9 ||z||.
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    const double max_eig = es.eigenvalues().cwiseAbs().maxCoeff();
    constexpr double kRidge = 1e-9;
    if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, max_eig))
        throw InvalidInputError("solve_qp: H not positive semidefinite");
    if (es.eigenvalues().minCoeff() < kRidge) {
        Vector lifted = es.eigenvalues().cwiseMax(kRidge);
        H = es.eigenvectors() * lifted.asDiagonal() * es.eigenvectors().transpose();
        H = 0.5 * (H + H.transpose());
        out.status.regularized = true;
    }

    // Feasible start: warm point if usable, otherwise a phase-1 LP vertex.
    Vector z;
    bool have_start = false;
    if (warm && warm->z.size() == n &&
        (m == 0 || (p.G * warm->z - p.h).maxCoeff() <= kFeasTol)) {
        z = warm->z;
        have_start = true;
    }
    if (!have_start) {
        LpResult feas = solve_lp({Vector::Zero(n), p.G, p.h});
        if (feas.status.state == SolveState::Infeasible) {
            out.status = feas.status;
            out.status.state = SolveState::Infeasible;
            return out;
        }
        if (feas.status.state != SolveState::Optimal) {
            out.status.state = SolveState::NumericalFailure;
            return out;
        }
        z = feas.x;
    }

    WorkingSet ws;
    if (warm && have_start) {
        for (int i : warm->active) {
            if (i < 0 || i >= m || ws.contains(i)) continue;
            if (std::abs((p.G.row(i) * z)(0) - p.h(i)) <= kFeasTol &&
                static_cast<int>(ws.rows.size()) < n - 1)
                ws.rows.push_back(i);
        }
    }

    const int budget = 100 * (n + m) + 1000;
    int iter = 0;
    Vector lambda_full = Vector::Zero(m);

    while (true) {
        if (++iter > budget) {
            out.status.state = SolveState::NumericalFailure;
            out.status.iterations = iter;
            return out;
        }

        const int k = static_cast<int>(ws.rows.size());
        Vector g = H * z + p.f;
        Vector step = Vector::Zero(n);
        Vector lam_w;

        if (k == 0) {
            step = -H.ldlt().solve(g);
        } else {
            Matrix Gw(k, n);
            for (int i = 0; i < k; ++i) Gw.row(i) = p.G.row(ws.rows[i]);
            // Null-space method on the working set.
            Eigen::ColPivHouseholderQR<Matrix> qr(Gw.transpose());
            const int rank = static_cast<int>(qr.rank());
            Matrix Qfull = qr.householderQ();
            Matrix Z = Qfull.rightCols(n - rank);
            if (n - rank > 0) {
                Matrix Hr = Z.transpose() * H * Z;
                Vector v = -Hr.ldlt().solve(Z.transpose() * g);
                step = Z * v;
            }
            // Multipliers from G_w^T lam = -(H (z+p) + f); at a subspace
            // stationary point the residual of this LS solve is ~0.
            lam_w = qr.solve(-(H * (z + step) + p.f));
        }

        if (step.cwiseAbs().maxCoeff() <= kStepTol * (1.0 + z.cwiseAbs().maxCoeff())) {
            // Stationary on the working set; check multiplier signs. Under
            // ridge regularization the multipliers carry ~1e-9-scale noise,
            // so the drop tolerance widens accordingly; smallest index
            // first (Bland) keeps degenerate problems from cycling.
            const double mult_tol =
                out.status.regularized
                    ? std::max(kMultTol, 1e-8 * (1.0 + z.cwiseAbs().maxCoeff()))
                    : kMultTol;
            int drop = -1;
            for (int i = 0; i < k; ++i) {
                if (lam_w(i) < -mult_tol &&
                    (drop < 0 || ws.rows[i] < ws.rows[drop])) {
                    drop = i;
                }
            }
            if (drop < 0) {
                lambda_full.setZero();
                for (int i = 0; i < k; ++i)
                    lambda_full(ws.rows[i]) = std::max(lam_w(i), 0.0);
                out.z = z;
                out.objective = 0.5 * z.dot(p.H * z) + p.f.dot(z);
                out.status.certificate = lambda_full;
                out.status.iterations = iter;
                out.status.active_set_size = k;
                out.status.residual = kkt_residual(p, z, lambda_full);
                out.status.state = out.status.residual <= 1e-7 * (1.0 + g.cwiseAbs().maxCoeff())
                                       ? SolveState::Optimal
                                       : SolveState::NumericalFailure;
                return out;
            }
            ws.rows.erase(ws.rows.begin() + drop);
            continue;
        }

        // Longest feasible step along `step`; smallest row index breaks ties.
        double alpha = 1.0;
        int blocking = -1;
        for (int i = 0; i < m; ++i) {
            if (ws.contains(i)) continue;
            const double gi_p = (p.G.row(i) * step)(0);
            if (gi_p <= kStepTol) continue;
            const double ai = ((p.h(i) - (p.G.row(i) * z)(0))) / gi_p;
            if (ai < alpha - 1e-14) {
                alpha = std::max(ai, 0.0);
                blocking = i;
            }
        }
        z += alpha * step;
        if (blocking >= 0 && static_cast<int>(ws.rows.size()) < n)
            ws.rows.push_back(blocking);
    }
}

}  // namespace cvpm
