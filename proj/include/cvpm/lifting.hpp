#pragma once

#include "cvpm/lp.hpp"

#include <vector>

namespace cvpm {

// Stacked prediction matrices for X = A_lift x_t + B_lift U + G_lift W over a
// horizon of N steps, X = (x_{t+1}, ..., x_{t+N}). Block (k, j) of B_lift is
// A^{k-j} B for j <= k (blocks indexed from 0), analogously G_lift with G,
// and block k of A_lift is A^{k+1}.
struct LiftedSystem {
    Matrix A_lift;
    Matrix B_lift;
    Matrix G_lift;
    int N = 0;
    int n_x = 0;
    int n_u = 0;
    int n_w = 0;
};

LiftedSystem build_lifted(const Matrix& A, const Matrix& B, const Matrix& G, int N);

// Stacked mean trajectory A_lift x + B_lift U.
Vector predict_mean(const LiftedSystem& L, const Vector& x, const Vector& U);

// Block-diagonal inverse covariance of the stacked state trajectory:
// N blocks of Sigma_x^{-1}; in adapted form the last block is replaced by S.
struct BlockCovariance {
    std::vector<Matrix> inverse_blocks;
    bool adapted = false;

    int block_dim() const { return static_cast<int>(inverse_blocks.front().rows()); }
    int total_dim() const { return block_dim() * static_cast<int>(inverse_blocks.size()); }

    Matrix assemble_inverse() const;
    double quadratic_form(const Vector& r) const;  // r^T Sigma^{-1} r
};

BlockCovariance block_cov_inverse(const Matrix& Sigma_x, const Matrix& S, int N,
                                  bool adapted);

}  // namespace cvpm
