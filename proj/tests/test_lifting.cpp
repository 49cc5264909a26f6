#include "doctest.h"

#include "cvpm/lifting.hpp"
#include "cvpm/linalg.hpp"
#include "cvpm/rng.hpp"

using namespace cvpm;

namespace {

Matrix paper_A() { return (Matrix(2, 2) << 0.99, -0.02, 0.21, 0.92).finished(); }
Matrix paper_B() { return (Matrix(2, 1) << 0.30, 0.06).finished(); }
Matrix paper_G() { return (Matrix(2, 2) << 0.02, 0.00, 0.01, 0.19).finished(); }

// Step-by-step recursion oracle for the mean trajectory.
Vector recursion_oracle(const Matrix& A, const Matrix& B, const Vector& x0,
                        const Vector& U, int N) {
    Vector x = x0;
    Vector out(N * x0.size());
    for (int k = 0; k < N; ++k) {
        x = A * x + B * U.segment(k * B.cols(), B.cols());
        out.segment(k * x0.size(), x0.size()) = x;
    }
    return out;
}

}  // namespace

TEST_CASE("single-step lift reduces to the raw matrices") {
    LiftedSystem L = build_lifted(paper_A(), paper_B(), paper_G(), 1);
    CHECK((L.A_lift - paper_A()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((L.B_lift - paper_B()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((L.G_lift - paper_G()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity dynamics fill the lower triangle with B") {
    LiftedSystem L = build_lifted(Matrix::Identity(2, 2), paper_B(), paper_G(), 3);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j <= k; ++j)
            CHECK((L.B_lift.block(2 * k, j, 2, 1) - paper_B()).cwiseAbs().maxCoeff() ==
                  0.0);
    CHECK(L.B_lift.block(0, 1, 2, 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("block structure follows the powers of A") {
    LiftedSystem L = build_lifted(paper_A(), paper_B(), paper_G(), 10);
    Matrix Ak = Matrix::Identity(2, 2);
    for (int k = 0; k < 10; ++k) {
        Ak = paper_A() * Ak;  // A^{k+1}
        CHECK((L.A_lift.middleRows(2 * k, 2) - Ak).cwiseAbs().maxCoeff() <= 1e-14);
    }
    // Block (k, j) of G_lift is A^{k-j} G.
    Matrix A3G = paper_A() * paper_A() * paper_A() * paper_G();
    CHECK((L.G_lift.block(2 * 5, 2 * 2, 2, 2) - A3G).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("predicted means equal the recursion for random inputs") {
    LiftedSystem L = build_lifted(paper_A(), paper_B(), paper_G(), 10);
    CHECK(predict_mean(L, Vector::Zero(2), Vector::Zero(10)).cwiseAbs().maxCoeff() == 0.0);
    RngStream rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Vector x0(2);
        x0 << 4.0 * rng.next_uniform() - 2.0, 4.0 * rng.next_uniform() - 2.0;
        Vector U(10);
        for (int i = 0; i < 10; ++i) U(i) = rng.next_uniform();
        const Vector lifted = predict_mean(L, x0, U);
        const Vector recur = recursion_oracle(paper_A(), paper_B(), x0, U, 10);
        CHECK((lifted - recur).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("disturbance lift accumulates propagated terms") {
    LiftedSystem L = build_lifted(paper_A(), paper_B(), paper_G(), 10);
    Vector w(2);
    w << 0.13, -0.07;
    Vector W = Vector::Zero(20);
    for (int k = 0; k < 10; ++k) W.segment(2 * k, 2) = w;
    const Vector via_lift = L.G_lift * W;
    Vector x = Vector::Zero(2);
    for (int k = 0; k < 10; ++k) {
        x = paper_A() * x + paper_G() * w;
        CHECK((via_lift.segment(2 * k, 2) - x).cwiseAbs().maxCoeff() <= 1e-13);
    }
}

TEST_CASE("block covariance inverse in plain and adapted form") {
    BlockCovariance id = block_cov_inverse(Matrix::Identity(2, 2),
                                           Matrix::Identity(2, 2), 5, true);
    CHECK((id.assemble_inverse() - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff() == 0.0);

    Matrix Sigma_w = 0.2 * Matrix::Identity(2, 2);
    Matrix Sx = solve_dlyap(paper_A(), paper_G() * Sigma_w * paper_G().transpose());
    Matrix Sx_inv = Sx.inverse();

    BlockCovariance plain = block_cov_inverse(Sx, Matrix::Identity(2, 2), 10, false);
    CHECK(!plain.adapted);
    for (const auto& blk : plain.inverse_blocks)
        CHECK((blk - Sx_inv).cwiseAbs().maxCoeff() <= 1e-10);

    Matrix Q = (Matrix(2, 2) << 1.0, 0.0, 0.0, 5.0).finished();
    Matrix K = lqr_gain(paper_A(), paper_B(), Q, Matrix::Ones(1, 1));
    Matrix Acl = paper_A() - paper_B() * K;
    Matrix S = solve_dlyap(Acl.transpose(), Sx_inv);
    BlockCovariance adapted = block_cov_inverse(Sx, S, 10, true);
    CHECK((adapted.inverse_blocks.back() - Sx_inv).cwiseAbs().maxCoeff() > 1.0);
    // The terminal block solves its own stationarity equation.
    CHECK((Acl.transpose() * S * Acl - S + Sx_inv).cwiseAbs().maxCoeff() <= 1e-10 *
          (1.0 + S.cwiseAbs().maxCoeff()));

    // Quadratic form agrees with the assembled matrix.
    RngStream rng(6);
    Vector r(20);
    for (int i = 0; i < 20; ++i) r(i) = 2.0 * rng.next_uniform() - 1.0;
    CHECK(adapted.quadratic_form(r) ==
          doctest::Approx(r.dot(adapted.assemble_inverse() * r)).epsilon(1e-12));
}
