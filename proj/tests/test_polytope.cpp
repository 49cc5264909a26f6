#include "doctest.h"

#include "cvpm/errors.hpp"
#include "cvpm/polytope.hpp"
#include "cvpm/rng.hpp"

#include <cmath>

using namespace cvpm;

namespace {

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

Polytope unit_box2() { return Polytope::from_box(vec2(-1, -1), vec2(1, 1)); }

Polytope state_box() { return Polytope::from_box(vec2(0.0, 2.8), vec2(2.0, 3.8)); }

Polytope disturbance_box() { return Polytope::from_box(vec2(-0.2, -0.2), vec2(0.2, 0.2)); }

// {0} in R^n.
Polytope singleton(int n) {
    Matrix F(2 * n, n);
    F << Matrix::Identity(n, n), -Matrix::Identity(n, n);
    return Polytope(F, Vector::Zero(2 * n));
}

Matrix paper_G() { return (Matrix(2, 2) << 0.02, 0.00, 0.01, 0.19).finished(); }

// Random box/simplex helpers for property tests.
Polytope random_box(RngStream& rng, double span = 2.0) {
    Vector lo(2), hi(2);
    for (int i = 0; i < 2; ++i) {
        const double a = span * (2.0 * rng.next_uniform() - 1.0);
        const double b = a + 0.1 + span * rng.next_uniform();
        lo(i) = a;
        hi(i) = b;
    }
    return Polytope::from_box(lo, hi);
}

Polytope random_simplex(RngStream& rng, double span = 1.5) {
    // Affine image of the standard simplex with a nondegenerate matrix.
    Matrix M(2, 2);
    do {
        for (int i = 0; i < 4; ++i) M(i / 2, i % 2) = 2.0 * rng.next_uniform() - 1.0;
    } while (std::abs(M.determinant()) < 0.2);
    Vector shift(2);
    shift << span * (2.0 * rng.next_uniform() - 1.0), span * (2.0 * rng.next_uniform() - 1.0);
    // H-rep of {x, y >= 0, x + y <= 1} mapped through x -> M x + shift.
    Matrix F0(3, 2);
    F0 << -1, 0, 0, -1, 1, 1;
    Vector g0(3);
    g0 << 0, 0, 1;
    Matrix Minv = M.inverse();
    return Polytope(F0 * Minv, g0 + F0 * Minv * shift);
}

}  // namespace

TEST_CASE("from_box builds the converter constraint boxes") {
    Polytope xp = state_box();
    CHECK(xp.rows() == 4);
    CHECK(xp.contains(vec2(1.06, 3.30), 0.0));  // reference lies inside
    CHECK(!xp.contains(vec2(1.0, 2.7), 0.0));
    Polytope w = disturbance_box();
    CHECK(w.contains(Vector::Zero(2), 0.0));
    Polytope u = Polytope::from_box(Vector::Zero(1), Vector::Ones(1));
    CHECK(u.contains(Vector::Constant(1, 0.28), 0.0));
    CHECK_THROWS_AS(Polytope::from_box(vec2(1, 0), vec2(1, 1)), InvalidInputError);
}

TEST_CASE("constructed rows are normalized to unit norm") {
    Matrix F(3, 2);
    F << 2, 0, 0, -5, 3, 4;
    Vector g(3);
    g << 2, 10, 25;
    Polytope P(F, g);
    for (int i = 0; i < P.rows(); ++i)
        CHECK(P.F().row(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(P.g()(0) == doctest::Approx(1.0));   // 2x <= 2 becomes x <= 1
    CHECK(P.g()(2) == doctest::Approx(5.0));   // (3,4)/5, 25/5
    CHECK(P.contains(vec2(1.0, -2.0), 1e-12));
}

TEST_CASE("contains honors the tolerance band") {
    Polytope b = unit_box2();
    CHECK(b.contains(Vector::Zero(2), 0.0));
    CHECK(b.contains(vec2(1.0 + 1e-12, 0.0), 1e-9));
    CHECK(!b.contains(vec2(1.0 + 1e-6, 0.0), 1e-9));
    CHECK_THROWS_AS(b.contains(Vector::Zero(3), 0.0), InvalidInputError);
}

TEST_CASE("emptiness is certified both ways") {
    Matrix F(2, 1);
    F << 1.0, -1.0;
    Vector g(2);
    g << -1.0, -1.0;
    EmptinessCertificate cert = check_empty(Polytope(F, g));
    CHECK(cert.empty);
    CHECK(cert.farkas.minCoeff() >= 0.0);
    CHECK(g.dot(cert.farkas) < 0.0);

    EmptinessCertificate full = check_empty(unit_box2());
    CHECK(!full.empty);
    CHECK(unit_box2().contains(full.witness, 1e-9));
}

TEST_CASE("intersect stacks halfspaces") {
    Polytope a = Polytope::from_box(vec2(0, 0), vec2(2, 2));
    Polytope b = Polytope::from_box(vec2(1, 1), vec2(3, 3));
    Polytope c = intersect(a, b);
    for (int i = 0; i < 2; ++i) {
        Vector e = Vector::Zero(2);
        e(i) = 1.0;
        CHECK(support(c, e) == doctest::Approx(2.0));
        CHECK(support(c, -e) == doctest::Approx(-1.0));
    }
    // Rows with +inf offsets are vacuous and dropped at construction.
    Matrix F(3, 2);
    F << 1, 0, 0, 1, 1, 1;
    Vector g(3);
    g << 1, 1, std::numeric_limits<double>::infinity();
    CHECK(Polytope(F, g).rows() == 2);
}

TEST_CASE("affine preimage is exact membership-wise") {
    Polytope b = unit_box2();
    Polytope pre = affine_preimage(b, 2.0 * Matrix::Identity(2, 2));
    CHECK(support(pre, vec2(1, 0)) == doctest::Approx(0.5));
    RngStream rng(8);
    Matrix M(2, 2);
    M << 1.0, 0.3, -0.2, 0.9;
    Polytope preM = affine_preimage(b, M);
    for (int i = 0; i < 200; ++i) {
        Vector z = vec2(4.0 * rng.next_uniform() - 2.0, 4.0 * rng.next_uniform() - 2.0);
        CHECK(preM.contains(z, 0.0) == b.contains(M * z, 0.0));
    }
}

TEST_CASE("affine image of the disturbance box through G is the hand parallelogram") {
    Polytope img = affine_image(paper_G(), disturbance_box());
    CHECK(support(img, vec2(1, 0)) == doctest::Approx(0.004).epsilon(1e-9));
    CHECK(support(img, vec2(-1, 0)) == doctest::Approx(0.004).epsilon(1e-9));
    CHECK(support(img, vec2(0, 1)) == doctest::Approx(0.04).epsilon(1e-9));
    // The four corners of the box map to (+-0.004, +-0.002 +- 0.038).
    std::vector<Vector> v = vertices(img);
    REQUIRE(v.size() == 4);
    auto has_vertex = [&](double a, double b) {
        for (const auto& p : v)
            if ((p - vec2(a, b)).cwiseAbs().maxCoeff() < 1e-9) return true;
        return false;
    };
    CHECK(has_vertex(0.004, 0.04));
    CHECK(has_vertex(0.004, -0.036));
    CHECK(has_vertex(-0.004, 0.036));
    CHECK(has_vertex(-0.004, -0.04));
}

TEST_CASE("affine image handles rank-deficient maps up to dimension 3") {
    // (-B) o U is the segment conv{(0,0), (-0.30, -0.06)}.
    Matrix mB(2, 1);
    mB << -0.30, -0.06;
    Polytope seg = affine_image(mB, Polytope::from_box(Vector::Zero(1), Vector::Ones(1)));
    std::vector<Vector> v = vertices(seg);
    REQUIRE(v.size() == 2);
    CHECK(((v[0] - vec2(0, 0)).norm() < 1e-9 || (v[0] - vec2(-0.30, -0.06)).norm() < 1e-9));
    CHECK(seg.contains(vec2(-0.15, -0.03), 1e-9));
    CHECK(!seg.contains(vec2(-0.15, 0.0), 1e-9));
    // Identity map returns the same set.
    Polytope same = affine_image(Matrix::Identity(2, 2), unit_box2());
    CHECK(support(same, vec2(1, 1)) == doctest::Approx(2.0));
}

TEST_CASE("support values on boxes and mapped boxes") {
    CHECK(support(unit_box2(), vec2(1, 0)) == doctest::Approx(1.0));
    CHECK(support(disturbance_box(), vec2(1, 1)) == doctest::Approx(0.4));
    Polytope img = affine_image(paper_G(), disturbance_box());
    CHECK(support(img, vec2(0, 1)) == doctest::Approx(0.04));
    Matrix F(1, 2);
    F << 1, 0;
    CHECK_THROWS_AS(support(Polytope(F, Vector::Ones(1)), vec2(0, 1)), UnboundedSetError);
}

TEST_CASE("pontryagin difference tightens facet-wise") {
    Polytope xp = state_box();
    CHECK(support(pontryagin_diff(xp, singleton(2)), vec2(1, 0)) == doctest::Approx(2.0));

    Polytope tight = pontryagin_diff(xp, affine_image(paper_G(), disturbance_box()));
    CHECK(support(tight, vec2(1, 0)) == doctest::Approx(1.996).epsilon(1e-9));
    CHECK(-support(tight, vec2(-1, 0)) == doctest::Approx(0.004).epsilon(1e-9));
    CHECK(support(tight, vec2(0, 1)) == doctest::Approx(3.76).epsilon(1e-9));
    CHECK(-support(tight, vec2(0, -1)) == doctest::Approx(2.84).epsilon(1e-9));

    // Self-difference of a symmetric set collapses to the origin.
    Polytope zero = pontryagin_diff(unit_box2(), unit_box2());
    std::vector<Vector> v = vertices(zero);
    REQUIRE(v.size() == 1);
    CHECK(v[0].cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("minkowski sum of boxes adds intervals") {
    Polytope a = Polytope::from_box(vec2(0, 0), vec2(1, 1));
    Polytope b = Polytope::from_box(vec2(-0.5, -0.5), vec2(0.5, 0.5));
    Polytope s = minkowski_sum(a, b);
    CHECK(support(s, vec2(1, 0)) == doctest::Approx(1.5));
    CHECK(-support(s, vec2(-1, 0)) == doctest::Approx(-0.5));
    Polytope same = minkowski_sum(a, singleton(2));
    CHECK(support(same, vec2(1, 1)) == doctest::Approx(2.0));
}

TEST_CASE("minkowski/pontryagin duality on random box-simplex pairs") {
    RngStream rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        Polytope P = random_box(rng);
        Polytope Q = (trial % 2 == 0) ? random_simplex(rng) : random_box(rng, 0.7);
        Polytope sum = minkowski_sum(P, Q);
        Polytope erode_dilate = pontryagin_diff(sum, Q);
        for (const auto& v : vertices(P)) CHECK(erode_dilate.contains(v, 1e-9));
        Polytope dilate_erode = minkowski_sum(pontryagin_diff(sum, Q), Q);
        for (const auto& v : vertices(dilate_erode)) CHECK(sum.contains(v, 1e-9));
    }
}

TEST_CASE("projection matches the feasibility-LP oracle on a grid") {
    Polytope cube = Polytope::from_box((Vector(3) << 0, 0, 0).finished(),
                                       (Vector(3) << 1, 1, 1).finished());
    Polytope square = project(cube, {0, 1});
    CHECK(support(square, vec2(1, 0)) == doctest::Approx(1.0));
    CHECK(square.dim() == 2);

    // Simplex shadow: {x + y <= 1, x, y >= 0} projects onto [0, 1].
    Matrix F(3, 2);
    F << 1, 1, -1, 0, 0, -1;
    Vector g(3);
    g << 1, 0, 0;
    Polytope shadow = project(Polytope(F, g), {0});
    CHECK(support(shadow, Vector::Ones(1)) == doctest::Approx(1.0));
    CHECK(-support(shadow, -Vector::Ones(1)) == doctest::Approx(0.0));

    // Random 3-D polytopes: grid membership in the projection agrees with
    // the existential feasibility LP over the eliminated coordinate.
    RngStream rng(321);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix Fr(9, 3);
        Vector gr(9);
        Fr.topRows(3) = Matrix::Identity(3, 3);
        Fr.middleRows(3, 3) = -Matrix::Identity(3, 3);
        gr.head(6).setConstant(1.0);
        for (int i = 6; i < 9; ++i) {
            for (int j = 0; j < 3; ++j) Fr(i, j) = 2.0 * rng.next_uniform() - 1.0;
            gr(i) = 0.3 + 0.5 * rng.next_uniform();
        }
        Polytope body(Fr, gr);
        Polytope shadow2 = project(body, {0, 1});
        for (double x = -1.2; x <= 1.2; x += 0.3) {
            for (double y = -1.2; y <= 1.2; y += 0.3) {
                // Existential oracle: does a z exist with (x, y, z) in body?
                Matrix Gz(body.rows(), 1);
                Vector hz(body.rows());
                for (int i = 0; i < body.rows(); ++i) {
                    Gz(i, 0) = body.F()(i, 2);
                    hz(i) = body.g()(i) - body.F()(i, 0) * x - body.F()(i, 1) * y;
                }
                const bool exists =
                    solve_lp({Vector::Zero(1), Gz, hz}).status.state == SolveState::Optimal;
                const bool member = shadow2.contains(vec2(x, y), 1e-7);
                if (exists != member) {
                    // disagreement allowed only inside a 1e-7 boundary band
                    const double slack = (shadow2.g() - shadow2.F() * vec2(x, y)).minCoeff();
                    CHECK(std::abs(slack) <= 1e-7);
                } else {
                    CHECK(exists == member);
                }
            }
        }
    }
}

TEST_CASE("redundancy removal is minimal and membership-preserving") {
    Polytope b = unit_box2();
    Matrix F(5, 2);
    F << b.F(), b.F().row(0);
    Vector g(5);
    g << b.g(), b.g()(0);
    CHECK(remove_redundancy(Polytope(F, g)).rows() == 4);

    Matrix F2(5, 2);
    F2 << b.F(), Matrix::Identity(1, 2);
    Vector g2(5);
    g2 << b.g(), 5.0;
    Polytope slim = remove_redundancy(Polytope(F2, g2));
    CHECK(slim.rows() == 4);

    RngStream rng(4);
    for (int i = 0; i < 1000; ++i) {
        Vector x = vec2(6.0 * rng.next_uniform() - 3.0, 6.0 * rng.next_uniform() - 3.0);
        CHECK(Polytope(F2, g2).contains(x, 0.0) == slim.contains(x, 0.0));
    }
    CHECK_THROWS_AS(remove_redundancy(Polytope::empty_set(2)), EmptySetError);
}

TEST_CASE("vertices come back counter-clockwise with active facets") {
    std::vector<Vector> v = vertices(unit_box2());
    REQUIRE(v.size() == 4);
    double area2 = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        const Vector& a = v[i];
        const Vector& b = v[(i + 1) % v.size()];
        area2 += a(0) * b(1) - b(0) * a(1);
    }
    CHECK(area2 > 0.0);  // counter-clockwise orientation
    Polytope box = unit_box2();
    for (const auto& p : v) {
        CHECK(box.contains(p, 1e-9));
        int active = 0;
        for (int i = 0; i < box.rows(); ++i)
            if (std::abs(box.F().row(i).dot(p) - box.g()(i)) < 1e-9) ++active;
        CHECK(active >= 2);
    }
    CHECK_THROWS_AS(vertices(Polytope::empty_set(2)), EmptySetError);
    Matrix F(1, 2);
    F << 1, 0;
    CHECK_THROWS_AS(vertices(Polytope(F, Vector::Ones(1))), UnboundedSetError);
}

TEST_CASE("shoelace areas of boxes are exact") {
    CHECK(volume_2d(unit_box2()) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(volume_2d(state_box()) == doctest::Approx(2.0).epsilon(1e-12));
    RngStream rng(17);
    for (int i = 0; i < 50; ++i) {
        Vector lo = vec2(2.0 * rng.next_uniform() - 1.0, 2.0 * rng.next_uniform() - 1.0);
        Vector hi = lo + vec2(0.1 + rng.next_uniform(), 0.1 + rng.next_uniform());
        const double expect = (hi - lo).prod();
        CHECK(volume_2d(Polytope::from_box(lo, hi)) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("cartesian power replicates blocks") {
    Polytope w10 = cartesian_power(disturbance_box(), 10);
    CHECK(w10.dim() == 20);
    CHECK(w10.rows() == 40);
    Polytope p1 = cartesian_power(unit_box2(), 1);
    CHECK(p1.rows() == 4);
    // Block structure: each row touches exactly one block.
    for (int i = 0; i < w10.rows(); ++i) {
        int nonzero_blocks = 0;
        for (int b = 0; b < 10; ++b)
            if (w10.F().row(i).segment(2 * b, 2).cwiseAbs().maxCoeff() > 0)
                ++nonzero_blocks;
        CHECK(nonzero_blocks == 1);
    }
}

TEST_CASE("chebyshev centers of box and simplex") {
    auto [c, r] = chebyshev_center(unit_box2());
    CHECK(c.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(r == doctest::Approx(1.0));
    Matrix F(3, 2);
    F << 1, 1, -1, 0, 0, -1;
    Vector g(3);
    g << 1, 0, 0;
    auto [cs, rs] = chebyshev_center(Polytope(F, g));
    CHECK(rs == doctest::Approx(1.0 / (2.0 + std::sqrt(2.0))).epsilon(1e-9));
    CHECK(Polytope(F, g).contains(cs, 0.0));
    CHECK_THROWS_AS(chebyshev_center(Polytope::empty_set(2)), EmptySetError);
}

TEST_CASE("support of an intersection never exceeds either operand") {
    RngStream rng(55);
    for (int trial = 0; trial < 40; ++trial) {
        Polytope P = random_box(rng);
        Polytope Q = random_box(rng);
        if (is_empty(intersect(P, Q))) continue;
        for (int k = 0; k < 8; ++k) {
            Vector a = vec2(2.0 * rng.next_uniform() - 1.0, 2.0 * rng.next_uniform() - 1.0);
            if (a.norm() < 1e-3) continue;
            const double s = support(intersect(P, Q), a);
            CHECK(s <= support(P, a) + 1e-9);
            CHECK(s <= support(Q, a) + 1e-9);
        }
    }
}
