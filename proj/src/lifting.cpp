#include "cvpm/lifting.hpp"

#include "cvpm/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace cvpm {

LiftedSystem build_lifted(const Matrix& A, const Matrix& B, const Matrix& G, int N) {
    if (N < 1)
        throw InvalidInputError("build_lifted: N must be >= 1");
    const int nx = static_cast<int>(A.rows());
    if (A.cols() != nx || B.rows() != nx || G.rows() != nx)
        throw InvalidInputError("build_lifted: inconsistent matrix shapes");
    const int nu = static_cast<int>(B.cols());
    const int nw = static_cast<int>(G.cols());

    LiftedSystem L;
    L.N = N;
    L.n_x = nx;
    L.n_u = nu;
    L.n_w = nw;
    L.A_lift = Matrix::Zero(N * nx, nx);
    L.B_lift = Matrix::Zero(N * nx, N * nu);
    L.G_lift = Matrix::Zero(N * nx, N * nw);

    std::vector<Matrix> Apow(static_cast<size_t>(N) + 1);
    Apow[0] = Matrix::Identity(nx, nx);
    for (int k = 1; k <= N; ++k) Apow[k] = A * Apow[k - 1];

    for (int k = 0; k < N; ++k) {
        L.A_lift.middleRows(k * nx, nx) = Apow[k + 1];
        for (int j = 0; j <= k; ++j) {
            L.B_lift.block(k * nx, j * nu, nx, nu) = Apow[k - j] * B;
            L.G_lift.block(k * nx, j * nw, nx, nw) = Apow[k - j] * G;
        }
    }
    return L;
}

Vector predict_mean(const LiftedSystem& L, const Vector& x, const Vector& U) {
    if (x.size() != L.n_x || U.size() != L.N * L.n_u)
        throw InvalidInputError("predict_mean: shape mismatch");
    return L.A_lift * x + L.B_lift * U;
}

Matrix BlockCovariance::assemble_inverse() const {
    const int d = block_dim();
    const int n = static_cast<int>(inverse_blocks.size());
    Matrix M = Matrix::Zero(n * d, n * d);
    for (int k = 0; k < n; ++k)
        M.block(k * d, k * d, d, d) = inverse_blocks[static_cast<size_t>(k)];
    return M;
}

double BlockCovariance::quadratic_form(const Vector& r) const {
    const int d = block_dim();
    if (r.size() != total_dim())
        throw InvalidInputError("quadratic_form: shape mismatch");
    double acc = 0.0;
    for (size_t k = 0; k < inverse_blocks.size(); ++k) {
        const Vector rk = r.segment(static_cast<int>(k) * d, d);
        acc += rk.dot(inverse_blocks[k] * rk);
    }
    return acc;
}

BlockCovariance block_cov_inverse(const Matrix& Sigma_x, const Matrix& S, int N,
                                  bool adapted) {
    if (N < 1)
        throw InvalidInputError("block_cov_inverse: N must be >= 1");
    Eigen::LLT<Matrix> llt(Sigma_x);
    if (llt.info() != Eigen::Success)
        throw InvalidInputError("block_cov_inverse: Sigma_x must be positive definite");
    const int d = static_cast<int>(Sigma_x.rows());
    Matrix inv = llt.solve(Matrix::Identity(d, d));
    inv = 0.5 * (inv + inv.transpose());

    BlockCovariance cov;
    cov.adapted = adapted;
    cov.inverse_blocks.assign(static_cast<size_t>(N), inv);
    if (adapted) {
        Eigen::LLT<Matrix> slt(S);
        if (slt.info() != Eigen::Success)
            throw InvalidInputError("block_cov_inverse: S must be positive definite");
        cov.inverse_blocks.back() = 0.5 * (S + S.transpose());
    }
    return cov;
}

}  // namespace cvpm
