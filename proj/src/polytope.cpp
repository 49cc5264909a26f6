#include "cvpm/polytope.hpp"

#include "cvpm/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cvpm {

namespace {

constexpr double kRowTol = 1e-12;
constexpr double kMembershipTol = 1e-7;
constexpr double kRedundancyTol = 1e-9;

// Normalize rows to unit norm; drop vacuous rows (zero normal, g >= 0);
// map a contradictory zero row onto the canonical empty representation.
void canonicalize(Matrix& F, Vector& g) {
    const int n = static_cast<int>(F.cols());
    std::vector<int> keep;
    bool contradictory = false;
    for (int i = 0; i < F.rows(); ++i) {
        const double nrm = F.row(i).norm();
        if (nrm <= kRowTol) {
            if (g(i) < -kRowTol) contradictory = true;
            continue;  // 0^T x <= g with g >= 0 is vacuous
        }
        keep.push_back(i);
    }
    if (contradictory) {
        F = Matrix::Zero(2, n);
        F(0, 0) = 1.0;
        F(1, 0) = -1.0;
        g = Vector::Constant(2, -1.0);
        return;
    }
    Matrix F2(static_cast<int>(keep.size()), n);
    Vector g2(static_cast<int>(keep.size()));
    for (size_t i = 0; i < keep.size(); ++i) {
        const double nrm = F.row(keep[i]).norm();
        F2.row(static_cast<int>(i)) = F.row(keep[i]) / nrm;
        g2(static_cast<int>(i)) = g(keep[i]) / nrm;
    }
    F = std::move(F2);
    g = std::move(g2);
}

}  // namespace

Polytope::Polytope(Matrix F, Vector g) : F_(std::move(F)), g_(std::move(g)) {
    if (F_.rows() != g_.size())
        throw InvalidInputError("Polytope: F rows and g size differ");
    if (F_.cols() < 1)
        throw InvalidInputError("Polytope: dimension must be >= 1");
    if (!F_.allFinite())
        throw InvalidInputError("Polytope: non-finite entries in F");
    for (int i = 0; i < g_.size(); ++i) {
        if (std::isnan(g_(i)) || g_(i) == -std::numeric_limits<double>::infinity())
            throw InvalidInputError("Polytope: invalid offset in g");
    }
    // +inf offsets are vacuous; drop them before normalizing.
    std::vector<int> finite;
    for (int i = 0; i < g_.size(); ++i)
        if (std::isfinite(g_(i))) finite.push_back(i);
    if (static_cast<int>(finite.size()) != g_.size()) {
        Matrix F2(static_cast<int>(finite.size()), F_.cols());
        Vector g2(static_cast<int>(finite.size()));
        for (size_t i = 0; i < finite.size(); ++i) {
            F2.row(static_cast<int>(i)) = F_.row(finite[i]);
            g2(static_cast<int>(i)) = g_(finite[i]);
        }
        F_ = std::move(F2);
        g_ = std::move(g2);
    }
    canonicalize(F_, g_);
    if (F_.rows() < 1)
        throw InvalidInputError("Polytope: needs at least one non-vacuous halfspace");
}

Polytope Polytope::from_box(const Vector& lower, const Vector& upper) {
    if (lower.size() != upper.size() || lower.size() < 1)
        throw InvalidInputError("from_box: bound vectors must match and be nonempty");
    const int n = static_cast<int>(lower.size());
    for (int i = 0; i < n; ++i)
        if (!(lower(i) < upper(i)))
            throw InvalidInputError("from_box: degenerate box, lower >= upper");
    Matrix F = Matrix::Zero(2 * n, n);
    Vector g(2 * n);
    for (int i = 0; i < n; ++i) {
        F(2 * i, i) = 1.0;
        g(2 * i) = upper(i);
        F(2 * i + 1, i) = -1.0;
        g(2 * i + 1) = -lower(i);
    }
    return Polytope(std::move(F), std::move(g));
}

Polytope Polytope::empty_set(int dim) {
    Matrix F = Matrix::Zero(2, dim);
    F(0, 0) = 1.0;
    F(1, 0) = -1.0;
    return Polytope(std::move(F), Vector::Constant(2, -1.0));
}

bool Polytope::contains(const Vector& x, double tol) const {
    if (x.size() != dim())
        throw InvalidInputError("contains: dimension mismatch");
    return ((F_ * x - g_).array() <= tol).all();
}

EmptinessCertificate check_empty(const Polytope& P) {
    LpResult r = solve_lp({Vector::Zero(P.dim()), P.F(), P.g()});
    EmptinessCertificate cert;
    if (r.status.state == SolveState::Optimal) {
        cert.empty = false;
        cert.witness = r.x;
    } else if (r.status.state == SolveState::Infeasible) {
        cert.empty = true;
        cert.farkas = r.status.certificate;
    } else {
        throw SolverFailureError("check_empty: LP backend returned " +
                                 to_string(r.status.state));
    }
    return cert;
}

bool is_empty(const Polytope& P) { return check_empty(P).empty; }

Polytope intersect(const Polytope& P, const Polytope& Q) {
    if (P.dim() != Q.dim())
        throw InvalidInputError("intersect: dimension mismatch");
    Matrix F(P.rows() + Q.rows(), P.dim());
    F << P.F(), Q.F();
    Vector g(P.rows() + Q.rows());
    g << P.g(), Q.g();
    return Polytope(std::move(F), std::move(g));
}

Polytope affine_preimage(const Polytope& P, const Matrix& M) {
    if (M.rows() != P.dim())
        throw InvalidInputError("affine_preimage: M rows must equal P.dim");
    return Polytope(P.F() * M, P.g());
}

double support(const Polytope& P, const Vector& a) {
    if (a.size() != P.dim())
        throw InvalidInputError("support: dimension mismatch");
    LpResult r = solve_lp({-a, P.F(), P.g()});
    switch (r.status.state) {
        case SolveState::Optimal: return -r.objective;
        case SolveState::Unbounded:
            throw UnboundedSetError("support: unbounded direction");
        case SolveState::Infeasible:
            throw EmptySetError("support: empty polytope");
        default:
            throw SolverFailureError("support: LP backend failed");
    }
}

Polytope pontryagin_diff(const Polytope& P, const Polytope& Q) {
    if (P.dim() != Q.dim())
        throw InvalidInputError("pontryagin_diff: dimension mismatch");
    Vector g(P.rows());
    for (int i = 0; i < P.rows(); ++i)
        g(i) = P.g()(i) - support(Q, P.F().row(i).transpose());
    // The tightened offsets may be contradictory; that is a legitimate
    // (empty) result, so bypass none of the construction checks.
    return Polytope(P.F(), std::move(g));
}

namespace {

struct RawRows {
    std::vector<Vector> rows;
    std::vector<double> rhs;
    int cols = 0;
};

// LP-certified redundancy filter on raw rows (assumed normalized).
void drop_redundant_rows(RawRows& r) {
    const int m = static_cast<int>(r.rows.size());
    if (m <= 1) return;
    // Cheap pass first: exact duplicates keep the tightest offset.
    std::vector<char> alive(m, 1);
    for (int i = 0; i < m; ++i) {
        if (!alive[i]) continue;
        for (int j = i + 1; j < m; ++j) {
            if (!alive[j]) continue;
            if ((r.rows[i] - r.rows[j]).cwiseAbs().maxCoeff() < 1e-12) {
                if (r.rhs[j] < r.rhs[i]) std::swap(r.rhs[i], r.rhs[j]);
                alive[j] = 0;
            }
        }
    }
    std::vector<int> idx;
    for (int i = 0; i < m; ++i)
        if (alive[i]) idx.push_back(i);

    std::vector<int> kept;
    for (size_t pos = 0; pos < idx.size(); ++pos) {
        const int i = idx[pos];
        // Maximize row i over the others (self bound relaxed by 1).
        std::vector<int> others = kept;
        for (size_t q = pos + 1; q < idx.size(); ++q) others.push_back(idx[q]);
        Matrix G(static_cast<int>(others.size()) + 1, r.cols);
        Vector h(static_cast<int>(others.size()) + 1);
        for (size_t q = 0; q < others.size(); ++q) {
            G.row(static_cast<int>(q)) = r.rows[others[q]].transpose();
            h(static_cast<int>(q)) = r.rhs[others[q]];
        }
        G.row(G.rows() - 1) = r.rows[i].transpose();
        h(G.rows() - 1) = r.rhs[i] + 1.0;
        LpResult lp = solve_lp({-r.rows[i], G, h});
        double maxval;
        if (lp.status.state == SolveState::Optimal) {
            maxval = -lp.objective;
        } else if (lp.status.state == SolveState::Unbounded) {
            maxval = std::numeric_limits<double>::infinity();
        } else if (lp.status.state == SolveState::Infeasible) {
            // The other rows alone are contradictory: the set is empty.
            r.rows.assign(2, Vector::Zero(r.cols));
            r.rows[0](0) = 1.0;
            r.rows[1](0) = -1.0;
            r.rhs.assign(2, -1.0);
            return;
        } else {
            throw SolverFailureError("remove_redundancy: LP backend failed");
        }
        if (maxval > r.rhs[i] + kRedundancyTol) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<Vector> rows2;
    std::vector<double> rhs2;
    for (int i : kept) {
        rows2.push_back(r.rows[i]);
        rhs2.push_back(r.rhs[i]);
    }
    r.rows = std::move(rows2);
    r.rhs = std::move(rhs2);
}

RawRows to_raw(const Polytope& P) {
    RawRows r;
    r.cols = P.dim();
    for (int i = 0; i < P.rows(); ++i) {
        r.rows.push_back(P.F().row(i).transpose());
        r.rhs.push_back(P.g()(i));
    }
    return r;
}

Polytope from_raw(const RawRows& r) {
    if (r.rows.empty()) {
        // No constraints left: the set is unbounded full space; represent
        // with a single vacuous-but-valid huge halfspace pair. Projections
        // of bounded sets never hit this path.
        throw UnboundedSetError("projection produced the full space");
    }
    Matrix F(static_cast<int>(r.rows.size()), r.cols);
    Vector g(static_cast<int>(r.rows.size()));
    for (size_t i = 0; i < r.rows.size(); ++i) {
        F.row(static_cast<int>(i)) = r.rows[i].transpose();
        g(static_cast<int>(i)) = r.rhs[i];
    }
    return Polytope(std::move(F), std::move(g));
}

// Eliminate one variable by Fourier-Motzkin; rows stay normalized.
void fm_eliminate(RawRows& r, int var, int row_budget) {
    std::vector<int> pos, neg, zer;
    for (size_t i = 0; i < r.rows.size(); ++i) {
        const double c = r.rows[i](var);
        if (c > kRowTol) pos.push_back(static_cast<int>(i));
        else if (c < -kRowTol) neg.push_back(static_cast<int>(i));
        else zer.push_back(static_cast<int>(i));
    }
    const long combos = static_cast<long>(pos.size()) * static_cast<long>(neg.size());
    if (static_cast<long>(zer.size()) + combos > row_budget)
        throw ResourceLimitError("project: Fourier-Motzkin row budget exceeded");

    RawRows out;
    out.cols = r.cols;
    auto strip = [var](const Vector& v) {
        Vector w(v.size() - 1);
        w.head(var) = v.head(var);
        w.tail(v.size() - var - 1) = v.tail(v.size() - var - 1);
        return w;
    };
    for (int i : zer) {
        out.rows.push_back(strip(r.rows[i]));
        out.rhs.push_back(r.rhs[i]);
    }
    for (int i : pos) {
        for (int j : neg) {
            Vector row = r.rows[i] / r.rows[i](var) - r.rows[j] / r.rows[j](var);
            double rhs = r.rhs[i] / r.rows[i](var) - r.rhs[j] / r.rows[j](var);
            Vector srow = strip(row);
            const double nrm = srow.norm();
            if (nrm <= kRowTol) {
                if (rhs < -1e-9) {
                    // Contradiction: projection is empty.
                    out.rows.assign(2, Vector::Zero(r.cols - 1));
                    out.rows[0](0) = 1.0;
                    out.rows[1](0) = -1.0;
                    out.rhs.assign(2, -1.0);
                    out.cols = r.cols - 1;
                    r = std::move(out);
                    return;
                }
                continue;
            }
            out.rows.push_back(srow / nrm);
            out.rhs.push_back(rhs / nrm);
        }
    }
    out.cols = r.cols - 1;
    r = std::move(out);
}

}  // namespace

Polytope project(const Polytope& P, const std::vector<int>& keep_dims, int row_budget) {
    if (keep_dims.empty() || keep_dims.size() > 3)
        throw InvalidInputError("project: |keep_dims| must be in 1..3");
    std::vector<char> keep(P.dim(), 0);
    for (int k : keep_dims) {
        if (k < 0 || k >= P.dim())
            throw InvalidInputError("project: keep index out of range");
        keep[k] = 1;
    }

    RawRows r = to_raw(P);
    // Track the original index of each remaining column.
    std::vector<int> cols(P.dim());
    std::iota(cols.begin(), cols.end(), 0);

    while (static_cast<int>(cols.size()) > static_cast<int>(keep_dims.size())) {
        // Greedy order: eliminate the variable with the fewest sign pairs.
        int best_var = -1;
        long best_cost = std::numeric_limits<long>::max();
        for (size_t v = 0; v < cols.size(); ++v) {
            if (keep[cols[v]]) continue;
            long np = 0, nn = 0;
            for (const auto& row : r.rows) {
                if (row(static_cast<int>(v)) > kRowTol) ++np;
                else if (row(static_cast<int>(v)) < -kRowTol) ++nn;
            }
            const long cost = np * nn - np - nn;
            if (cost < best_cost) {
                best_cost = cost;
                best_var = static_cast<int>(v);
            }
        }
        fm_eliminate(r, best_var, row_budget);
        cols.erase(cols.begin() + best_var);
        drop_redundant_rows(r);
        if (static_cast<int>(r.rows.size()) > row_budget)
            throw ResourceLimitError("project: row budget exceeded");
    }

    // Reorder the surviving columns to follow keep_dims.
    Matrix perm = Matrix::Zero(static_cast<int>(cols.size()),
                               static_cast<int>(keep_dims.size()));
    for (size_t j = 0; j < keep_dims.size(); ++j) {
        auto it = std::find(cols.begin(), cols.end(), keep_dims[j]);
        perm(static_cast<int>(it - cols.begin()), static_cast<int>(j)) = 1.0;
    }
    RawRows out;
    out.cols = static_cast<int>(keep_dims.size());
    for (size_t i = 0; i < r.rows.size(); ++i) {
        out.rows.push_back(perm.transpose() * r.rows[i]);
        out.rhs.push_back(r.rhs[i]);
    }
    return from_raw(out);
}

Polytope remove_redundancy(const Polytope& P) {
    EmptinessCertificate cert = check_empty(P);
    if (cert.empty)
        throw EmptySetError("remove_redundancy: empty input");
    RawRows r = to_raw(P);
    drop_redundant_rows(r);
    return from_raw(r);
}

Polytope affine_image(const Matrix& M, const Polytope& P) {
    if (M.cols() != P.dim())
        throw InvalidInputError("affine_image: M cols must equal P.dim");
    const int k = static_cast<int>(M.rows());
    if (k == P.dim()) {
        Eigen::FullPivLU<Matrix> lu(M);
        if (lu.isInvertible())
            return Polytope(P.F() * lu.inverse(), P.g());
    }
    if (k > 3)
        throw UnsupportedOperationError(
            "affine_image: non-invertible map with image dimension > 3");
    // Lifted formulation over (y, x): y = M x, x in P; eliminate x.
    const int n = P.dim();
    Matrix F = Matrix::Zero(2 * k + P.rows(), k + n);
    Vector g(2 * k + P.rows());
    F.block(0, 0, k, k) = Matrix::Identity(k, k);
    F.block(0, k, k, n) = -M;
    F.block(k, 0, k, k) = -Matrix::Identity(k, k);
    F.block(k, k, k, n) = M;
    g.head(2 * k).setZero();
    F.block(2 * k, k, P.rows(), n) = P.F();
    g.tail(P.rows()) = P.g();
    std::vector<int> keep(k);
    std::iota(keep.begin(), keep.end(), 0);
    return project(Polytope(std::move(F), std::move(g)), keep);
}

Polytope minkowski_sum_implicit(const Polytope& P, const Polytope& Q) {
    if (P.dim() != Q.dim())
        throw InvalidInputError("minkowski_sum: dimension mismatch");
    const int n = P.dim();
    // Variables (x, p): p in P and x - p in Q.
    Matrix F = Matrix::Zero(P.rows() + Q.rows(), 2 * n);
    Vector g(P.rows() + Q.rows());
    F.block(0, n, P.rows(), n) = P.F();
    g.head(P.rows()) = P.g();
    F.block(P.rows(), 0, Q.rows(), n) = Q.F();
    F.block(P.rows(), n, Q.rows(), n) = -Q.F();
    g.tail(Q.rows()) = Q.g();
    return Polytope(std::move(F), std::move(g));
}

Polytope minkowski_sum(const Polytope& P, const Polytope& Q) {
    if (P.dim() != Q.dim())
        throw InvalidInputError("minkowski_sum: dimension mismatch");
    if (P.dim() > 3)
        throw UnsupportedOperationError(
            "minkowski_sum: explicit mode only supported up to dimension 3");
    std::vector<int> keep(P.dim());
    std::iota(keep.begin(), keep.end(), 0);
    return project(minkowski_sum_implicit(P, Q), keep);
}

namespace {

bool nearly_equal(const Vector& a, const Vector& b, double tol) {
    return (a - b).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

std::vector<Vector> vertices(const Polytope& P) {
    const int n = P.dim();
    if (n > 3)
        throw UnsupportedOperationError("vertices: only supported up to dimension 3");
    EmptinessCertificate cert = check_empty(P);
    if (cert.empty)
        throw EmptySetError("vertices: empty polytope");
    // Boundedness check along +-e_i (throws UnboundedSetError if not).
    for (int i = 0; i < n; ++i) {
        Vector e = Vector::Zero(n);
        e(i) = 1.0;
        support(P, e);
        support(P, -e);
    }

    std::vector<Vector> verts;
    const Matrix& F = P.F();
    const Vector& g = P.g();
    const int m = P.rows();

    auto consider = [&](const Matrix& sub, const Vector& rhs) {
        Eigen::FullPivLU<Matrix> lu(sub);
        if (!lu.isInvertible()) return;
        Vector v = lu.solve(rhs);
        if (!P.contains(v, kMembershipTol)) return;
        for (const auto& w : verts)
            if (nearly_equal(v, w, 1e-8)) return;
        verts.push_back(v);
    };

    if (n == 1) {
        Vector e = Vector::Ones(1);
        Vector lo(1), hi(1);
        hi(0) = support(P, e);
        lo(0) = -support(P, -e);
        verts.push_back(lo);
        if (!nearly_equal(lo, hi, 1e-10)) verts.push_back(hi);
        return verts;
    }
    if (n == 2) {
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                Matrix sub(2, 2);
                sub << F.row(i), F.row(j);
                Vector rhs(2);
                rhs << g(i), g(j);
                consider(sub, rhs);
            }
        // Counter-clockwise order around the centroid.
        Vector c = Vector::Zero(2);
        for (const auto& v : verts) c += v;
        c /= static_cast<double>(verts.size());
        std::sort(verts.begin(), verts.end(), [&](const Vector& a, const Vector& b) {
            return std::atan2(a(1) - c(1), a(0) - c(0)) <
                   std::atan2(b(1) - c(1), b(0) - c(0));
        });
        return verts;
    }
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            for (int k = j + 1; k < m; ++k) {
                Matrix sub(3, 3);
                sub << F.row(i), F.row(j), F.row(k);
                Vector rhs(3);
                rhs << g(i), g(j), g(k);
                consider(sub, rhs);
            }
    return verts;
}

double volume_2d(const Polytope& P) {
    if (P.dim() != 2)
        throw InvalidInputError("volume_2d: dimension must be 2");
    std::vector<Vector> v = vertices(P);
    if (v.size() < 3) return 0.0;
    double area = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        const Vector& a = v[i];
        const Vector& b = v[(i + 1) % v.size()];
        area += a(0) * b(1) - b(0) * a(1);
    }
    return 0.5 * std::abs(area);
}

Polytope cartesian_power(const Polytope& P, int n) {
    if (n < 1)
        throw InvalidInputError("cartesian_power: n must be >= 1");
    std::vector<Polytope> factors(static_cast<size_t>(n), P);
    return direct_product(factors);
}

Polytope direct_product(const std::vector<Polytope>& factors) {
    if (factors.empty())
        throw InvalidInputError("direct_product: needs at least one factor");
    int rows = 0, dim = 0;
    for (const auto& p : factors) {
        rows += p.rows();
        dim += p.dim();
    }
    Matrix F = Matrix::Zero(rows, dim);
    Vector g(rows);
    int r0 = 0, c0 = 0;
    for (const auto& p : factors) {
        F.block(r0, c0, p.rows(), p.dim()) = p.F();
        g.segment(r0, p.rows()) = p.g();
        r0 += p.rows();
        c0 += p.dim();
    }
    return Polytope(std::move(F), std::move(g));
}

std::pair<Vector, double> chebyshev_center(const Polytope& P) {
    const int n = P.dim();
    // Variables (x, r): F x + r <= g (rows are unit norm), maximize r.
    Matrix G(P.rows(), n + 1);
    G.leftCols(n) = P.F();
    G.col(n).setOnes();
    Vector c = Vector::Zero(n + 1);
    c(n) = -1.0;
    LpResult lp = solve_lp({c, G, P.g()});
    if (lp.status.state == SolveState::Unbounded)
        throw UnboundedSetError("chebyshev_center: unbounded polytope");
    if (lp.status.state != SolveState::Optimal)
        throw SolverFailureError("chebyshev_center: LP backend failed");
    const double radius = lp.x(n);
    if (radius < 0.0)
        throw EmptySetError("chebyshev_center: empty polytope");
    return {lp.x.head(n), radius};
}

}  // namespace cvpm
