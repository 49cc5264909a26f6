#include "cvpm/linalg.hpp"

#include "cvpm/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>

namespace cvpm {

namespace {

void require_square(const Matrix& M, const char* who) {
    if (M.rows() != M.cols() || M.rows() < 1 || !M.allFinite())
        throw InvalidInputError(std::string(who) + ": square finite matrix required");
}

void require_symmetric(const Matrix& M, const char* who) {
    if ((M - M.transpose()).cwiseAbs().maxCoeff() >
        1e-10 * (1.0 + M.cwiseAbs().maxCoeff()))
        throw InvalidInputError(std::string(who) + ": symmetric matrix required");
}

void require_pd(const Matrix& M, const char* who) {
    require_symmetric(M, who);
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success)
        throw InvalidInputError(std::string(who) + ": positive definite matrix required");
}

}  // namespace

double spectral_radius(const Matrix& A) {
    require_square(A, "spectral_radius");
    Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        throw SolverFailureError("spectral_radius: eigenvalue iteration did not converge");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double dlyap_residual(const Matrix& A, const Matrix& Q, const Matrix& X) {
    return (A * X * A.transpose() - X + Q).cwiseAbs().maxCoeff();
}

Matrix solve_dlyap(const Matrix& A, const Matrix& Q) {
    require_square(A, "solve_dlyap");
    require_symmetric(Q, "solve_dlyap");
    if (spectral_radius(A) >= 1.0)
        throw InvalidInputError("solve_dlyap: spectral radius of A must be < 1");
    const int n = static_cast<int>(A.rows());
    // vec(X) = (I - A (x) A)^{-1} vec(Q)
    Matrix M = Matrix::Identity(n * n, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            M.block(i * n, j * n, n, n) -= A(i, j) * A;
    Eigen::Map<const Vector> qvec(Q.data(), n * n);
    Vector xvec = Eigen::PartialPivLU<Matrix>(M).solve(qvec);
    Matrix X = Eigen::Map<Matrix>(xvec.data(), n, n);
    X = 0.5 * (X + X.transpose());
    const double res = dlyap_residual(A, Q, X);
    if (res > 1e-10 * (1.0 + Q.cwiseAbs().maxCoeff()))
        throw SolverFailureError("solve_dlyap: residual above tolerance");
    return X;
}

double dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q,
                     const Matrix& R, const Matrix& P) {
    const Matrix BtPB = R + B.transpose() * P * B;
    const Matrix term = A.transpose() * P * B *
                        BtPB.ldlt().solve(B.transpose() * P * A);
    return (A.transpose() * P * A - term + Q - P).cwiseAbs().maxCoeff();
}

Matrix solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
    require_square(A, "solve_dare");
    if (B.rows() != A.rows() || B.cols() < 1)
        throw InvalidInputError("solve_dare: B shape inconsistent with A");
    require_pd(Q, "solve_dare(Q)");
    require_pd(R, "solve_dare(R)");

    // Structure-preserving doubling: A_{k+1} = A_k (I + G_k H_k)^{-1} A_k,
    // G_{k+1} = G_k + A_k (I + G_k H_k)^{-1} G_k A_k^T,
    // H_{k+1} = H_k + A_k^T H_k (I + G_k H_k)^{-1} A_k, with H_k -> P.
    const int n = static_cast<int>(A.rows());
    Matrix Ak = A;
    Matrix Gk = B * R.llt().solve(B.transpose());
    Matrix Hk = Q;
    const int max_iter = 200;
    for (int it = 0; it < max_iter; ++it) {
        Matrix W = Matrix::Identity(n, n) + Gk * Hk;
        Eigen::PartialPivLU<Matrix> lu(W);
        Matrix WiA = lu.solve(Ak);
        Matrix WiG = lu.solve(Gk);
        Matrix H_next = Hk + Ak.transpose() * Hk * WiA;
        Matrix G_next = Gk + Ak * WiG * Ak.transpose();
        Matrix A_next = Ak * WiA;
        const double delta = (H_next - Hk).cwiseAbs().maxCoeff();
        Ak = A_next;
        Gk = 0.5 * (G_next + G_next.transpose());
        Hk = 0.5 * (H_next + H_next.transpose());
        if (delta <= 1e-14 * (1.0 + Hk.cwiseAbs().maxCoeff())) break;
        if (!Hk.allFinite())
            throw SolverFailureError("solve_dare: doubling iteration diverged");
        if (it == max_iter - 1)
            throw SolverFailureError("solve_dare: iteration budget exhausted");
    }
    const double res = dare_residual(A, B, Q, R, Hk);
    if (res > 1e-8 * (1.0 + Hk.cwiseAbs().maxCoeff()))
        throw SolverFailureError("solve_dare: residual above tolerance");
    return Hk;
}

Matrix lqr_gain(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
    const Matrix P = solve_dare(A, B, Q, R);
    const Matrix K =
        (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
    if (spectral_radius(A - B * K) >= 1.0)
        throw SolverFailureError("lqr_gain: closed loop not stable");
    return K;
}

}  // namespace cvpm
