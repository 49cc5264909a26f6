#pragma once

#include "cvpm/lp.hpp"

#include <utility>
#include <vector>

namespace cvpm {

// Bounded convex set in halfspace representation {x : F x <= g}. Rows are
// normalized to unit Euclidean norm at construction, so offsets g are signed
// distances and tolerances compare across rows. Values are immutable after
// construction and safe to share between threads.
class Polytope {
public:
    Polytope(Matrix F, Vector g);

    static Polytope from_box(const Vector& lower, const Vector& upper);

    // Canonical empty set in R^n (two contradictory halfspaces).
    static Polytope empty_set(int dim);

    int dim() const { return static_cast<int>(F_.cols()); }
    int rows() const { return static_cast<int>(F_.rows()); }
    const Matrix& F() const { return F_; }
    const Vector& g() const { return g_; }

    bool contains(const Vector& x, double tol = 1e-7) const;

private:
    Matrix F_;
    Vector g_;
};

// Certified emptiness test; the Farkas vector is retained when empty.
struct EmptinessCertificate {
    bool empty = false;
    Vector farkas;    // y >= 0, F^T y = 0, g^T y < 0 when empty
    Vector witness;   // a feasible point when nonempty
};

EmptinessCertificate check_empty(const Polytope& P);
bool is_empty(const Polytope& P);

Polytope intersect(const Polytope& P, const Polytope& Q);

// {z : M z in P}; may be unbounded. Callers must intersect with a bounded
// set before vertex or volume operations.
Polytope affine_preimage(const Polytope& P, const Matrix& M);

// {M b : b in P}. Invertible square M by constraint substitution; otherwise
// supported for image dimension <= 3 via a lifted Fourier-Motzkin pass.
Polytope affine_image(const Matrix& M, const Polytope& P);

// max{a^T x : x in P}; throws UnboundedSetError in an unbounded direction.
double support(const Polytope& P, const Vector& a);

// P tightened facet-wise by the support of Q; exact for polytopic Q. The
// result may be empty.
Polytope pontryagin_diff(const Polytope& P, const Polytope& Q);

// Explicit Minkowski sum, dimension <= 3.
Polytope minkowski_sum(const Polytope& P, const Polytope& Q);

// Lifted representation of P + Q over (x, p): x - p in Q, p in P. The sum is
// the projection onto the first dim coordinates; intended for feasibility
// and projection callers in dimensions where explicit mode is unsupported.
Polytope minkowski_sum_implicit(const Polytope& P, const Polytope& Q);

// Orthogonal projection onto keep_dims (|keep_dims| <= 3) via
// Fourier-Motzkin elimination with LP redundancy removal after every
// eliminated variable. Throws ResourceLimitError past `row_budget` rows.
Polytope project(const Polytope& P, const std::vector<int>& keep_dims,
                 int row_budget = 20000);

// Same set with a minimal number of rows; every removed row is certified
// redundant by one LP. Requires nonempty input.
Polytope remove_redundancy(const Polytope& P);

// Vertex enumeration for dim <= 3; counter-clockwise order in 2-D.
std::vector<Vector> vertices(const Polytope& P);

// Shoelace area over the ordered vertex list (dim == 2 only).
double volume_2d(const Polytope& P);

// Block-diagonal replication of (F, g); dimension n * P.dim.
Polytope cartesian_power(const Polytope& P, int n);

// Cartesian product with heterogeneous factors (used to append a distinct
// terminal block).
Polytope direct_product(const std::vector<Polytope>& factors);

// Center and radius of the largest inscribed ball, via one LP.
std::pair<Vector, double> chebyshev_center(const Polytope& P);

}  // namespace cvpm
