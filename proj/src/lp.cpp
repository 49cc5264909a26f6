#include "cvpm/lp.hpp"

#include "cvpm/errors.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <vector>

namespace cvpm {

std::string to_string(SolveState s) {
    switch (s) {
        case SolveState::Optimal: return "optimal";
        case SolveState::Infeasible: return "infeasible";
        case SolveState::Unbounded: return "unbounded";
        case SolveState::NumericalFailure: return "numerical-failure";
    }
    return "unknown";
}

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kReducedCostTol = 1e-9;
constexpr double kFeasTol = 1e-9;

// Standard-form tableau data for  min c^T z  s.t.  A z = b, z >= 0.
// Columns: [x+ (n) | x- (n) | slack (m) | artificial (m)].
struct Standard {
    int m = 0, n = 0;
    Matrix A;       // m x (2n + 2m)
    Vector b;       // >= 0 after row scaling
    Vector sigma;   // row scaling signs
    Vector c1, c2;  // phase-1 / phase-2 costs
};

Standard build_standard(const LpProblem& p) {
    Standard s;
    s.m = static_cast<int>(p.G.rows());
    s.n = static_cast<int>(p.G.cols());
    const int total = 2 * s.n + 2 * s.m;
    s.A = Matrix::Zero(s.m, total);
    s.sigma = Vector::Ones(s.m);
    s.b = p.h;
    for (int i = 0; i < s.m; ++i) {
        if (p.h(i) < 0.0) {
            s.sigma(i) = -1.0;
            s.b(i) = -p.h(i);
        }
    }
    for (int i = 0; i < s.m; ++i) {
        s.A.row(i).segment(0, s.n) = s.sigma(i) * p.G.row(i);
        s.A.row(i).segment(s.n, s.n) = -s.sigma(i) * p.G.row(i);
        s.A(i, 2 * s.n + i) = s.sigma(i);
        s.A(i, 2 * s.n + s.m + i) = 1.0;
    }
    s.c1 = Vector::Zero(total);
    s.c1.segment(2 * s.n + s.m, s.m).setOnes();
    s.c2 = Vector::Zero(total);
    s.c2.segment(0, s.n) = p.c;
    s.c2.segment(s.n, s.n) = -p.c;
    return s;
}

struct SimplexCore {
    const Standard& s;
    std::vector<int> basis;        // size m, column indices
    std::vector<char> in_basis;    // over all columns
    Matrix Binv;
    Vector xB;
    int iterations = 0;

    explicit SimplexCore(const Standard& std_form) : s(std_form) {
        basis.resize(s.m);
        in_basis.assign(s.A.cols(), 0);
        for (int i = 0; i < s.m; ++i) {
            basis[i] = 2 * s.n + s.m + i;
            in_basis[basis[i]] = 1;
        }
        Binv = Matrix::Identity(s.m, s.m);
        xB = s.b;
    }

    void refactor() {
        Matrix B(s.m, s.m);
        for (int i = 0; i < s.m; ++i) B.col(i) = s.A.col(basis[i]);
        Eigen::PartialPivLU<Matrix> lu(B);
        Binv = lu.inverse();
        xB = Binv * s.b;
    }

    bool is_artificial(int col) const { return col >= 2 * s.n + s.m; }

    // One simplex phase; returns Optimal or Unbounded, NumericalFailure on
    // budget exhaustion. `allow_artificial_entering` must stay false; basic
    // artificials are forced out at zero step instead.
    SolveState run_phase(const Vector& cost, bool phase_one, Vector* ray) {
        const int total = static_cast<int>(s.A.cols());
        const int budget = 200 * (s.m + s.n) + 2000;
        const int bland_after = 20 * (s.m + s.n) + 200;
        int since_refactor = 0;
        while (true) {
            if (++iterations > budget) return SolveState::NumericalFailure;
            const bool bland = iterations > bland_after;

            Vector cB(s.m);
            for (int i = 0; i < s.m; ++i) cB(i) = cost(basis[i]);
            Vector y = Binv.transpose() * cB;

            int entering = -1;
            double best = -kReducedCostTol;
            for (int j = 0; j < total; ++j) {
                if (in_basis[j]) continue;
                if (is_artificial(j)) continue;  // never re-enter
                const double dj = cost(j) - y.dot(s.A.col(j));
                if (dj < best) {
                    if (bland) {
                        entering = j;
                        break;  // smallest index with negative reduced cost
                    }
                    best = dj;
                    entering = j;
                }
            }
            if (entering < 0) return SolveState::Optimal;

            Vector w = Binv * s.A.col(entering);

            int leave = -1;
            double alpha = std::numeric_limits<double>::infinity();
            for (int i = 0; i < s.m; ++i) {
                double ratio;
                if (w(i) > kPivotTol) {
                    ratio = std::max(xB(i), 0.0) / w(i);
                } else if (!phase_one && is_artificial(basis[i]) && std::abs(w(i)) > kPivotTol) {
                    ratio = 0.0;  // keep artificials pinned at zero in phase 2
                } else {
                    continue;
                }
                if (ratio < alpha - 1e-15 ||
                    (ratio < alpha + 1e-15 && (leave < 0 || basis[i] < basis[leave]))) {
                    alpha = ratio;
                    leave = i;
                }
            }
            if (leave < 0) {
                if (ray) {
                    // Improving ray in original variables: x+ - x- components.
                    Vector r = Vector::Zero(s.n);
                    if (entering < s.n) r(entering) = 1.0;
                    else if (entering < 2 * s.n) r(entering - s.n) = -1.0;
                    Vector dz = -w;  // basic direction
                    for (int i = 0; i < s.m; ++i) {
                        const int col = basis[i];
                        if (col < s.n) r(col) += dz(i);
                        else if (col < 2 * s.n) r(col - s.n) -= dz(i);
                    }
                    *ray = r;
                }
                return SolveState::Unbounded;
            }

            xB -= alpha * w;
            xB(leave) = alpha;
            in_basis[basis[leave]] = 0;
            in_basis[entering] = 1;
            basis[leave] = entering;

            const double piv = w(leave);
            if (std::abs(piv) < 1e-9 || ++since_refactor >= 64) {
                refactor();
                since_refactor = 0;
            } else {
                Binv.row(leave) /= piv;
                for (int i = 0; i < s.m; ++i) {
                    if (i == leave) continue;
                    Binv.row(i) -= w(i) * Binv.row(leave);
                }
            }
            for (int i = 0; i < s.m; ++i)
                if (xB(i) < 0.0 && xB(i) > -1e-11) xB(i) = 0.0;
        }
    }

    Vector prices(const Vector& cost) const {
        Vector cB(s.m);
        for (int i = 0; i < s.m; ++i) cB(i) = cost(basis[i]);
        return Binv.transpose() * cB;
    }

    Vector primal() const {
        Vector x = Vector::Zero(s.n);
        for (int i = 0; i < s.m; ++i) {
            const int col = basis[i];
            if (col < s.n) x(col) += xB(i);
            else if (col < 2 * s.n) x(col - s.n) -= xB(i);
        }
        return x;
    }
};

}  // namespace

LpResult solve_lp(const LpProblem& p) {
    if (p.G.rows() != p.h.size() || p.G.cols() != p.c.size())
        throw InvalidInputError("solve_lp: inconsistent shapes");
    if (!p.G.allFinite() || !p.h.allFinite() || !p.c.allFinite())
        throw InvalidInputError("solve_lp: non-finite data");

    LpResult out;
    const double scale = 1.0 + p.h.cwiseAbs().maxCoeff();

    Standard s = build_standard(p);
    SimplexCore core(s);

    SolveState ph1 = core.run_phase(s.c1, true, nullptr);
    if (ph1 == SolveState::NumericalFailure) {
        out.status.state = SolveState::NumericalFailure;
        out.status.iterations = core.iterations;
        return out;
    }
    core.refactor();
    double infeas = 0.0;
    for (int i = 0; i < s.m; ++i)
        if (core.is_artificial(core.basis[i])) infeas += std::max(core.xB(i), 0.0);
    if (infeas > kFeasTol * scale) {
        // Farkas vector from the phase-1 prices.
        Vector y = core.prices(s.c1);
        Vector farkas = -(s.sigma.asDiagonal() * y);
        for (int i = 0; i < s.m; ++i) farkas(i) = std::max(farkas(i), 0.0);
        out.status.state = SolveState::Infeasible;
        out.status.certificate = farkas;
        out.status.iterations = core.iterations;
        out.status.residual = (p.G.transpose() * farkas).cwiseAbs().maxCoeff();
        return out;
    }

    Vector ray;
    SolveState ph2 = core.run_phase(s.c2, false, &ray);
    if (ph2 == SolveState::NumericalFailure) {
        out.status.state = SolveState::NumericalFailure;
        out.status.iterations = core.iterations;
        return out;
    }
    if (ph2 == SolveState::Unbounded) {
        out.status.state = SolveState::Unbounded;
        out.status.certificate = ray;
        out.status.iterations = core.iterations;
        return out;
    }

    core.refactor();
    out.x = core.primal();
    out.objective = p.c.dot(out.x);

    // Inequality multipliers and certified optimality: duality gap plus
    // primal feasibility must both be at tolerance.
    Vector y = core.prices(s.c2);
    Vector lambda = -(s.sigma.asDiagonal() * y);
    for (int i = 0; i < s.m; ++i) lambda(i) = std::max(lambda(i), 0.0);
    const double primal_viol =
        s.m > 0 ? std::max(0.0, (p.G * out.x - p.h).maxCoeff()) : 0.0;
    const double gap = std::abs(out.objective + p.h.dot(lambda));
    const double stat = (p.c + p.G.transpose() * lambda).cwiseAbs().maxCoeff();
    out.status.residual = std::max({primal_viol, gap / scale, stat});
    out.status.certificate = lambda;
    out.status.iterations = core.iterations;
    out.status.state = (out.status.residual <= 1e-6 * scale)
                           ? SolveState::Optimal
                           : SolveState::NumericalFailure;
    int active = 0;
    for (int i = 0; i < s.m; ++i)
        if (std::abs((p.G.row(i) * out.x)(0) - p.h(i)) <= 1e-8 * scale) ++active;
    out.status.active_set_size = active;
    return out;
}

}  // namespace cvpm
