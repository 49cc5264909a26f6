#pragma once

#include "cvpm/lp.hpp"

namespace cvpm {

// max |lambda_i(A)| for square A.
double spectral_radius(const Matrix& A);

// Solves A X A^T - X + Q = 0 for symmetric PSD Q and rho(A) < 1, by Kronecker
// vectorization. Residual is verified to 1e-10. The transpose-oriented
// equation A^T X A - X + Q = 0 is obtained by calling with A^T.
Matrix solve_dlyap(const Matrix& A, const Matrix& Q);

// Symmetric P >= Q solving P = A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A + Q
// by the structure-preserving doubling iteration; residual verified to 1e-8.
// Requires Q, R symmetric positive definite.
Matrix solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R);

// K = (R + B^T P B)^{-1} B^T P A with P from solve_dare; the closed loop
// A - B K is verified stable.
Matrix lqr_gain(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R);

double dlyap_residual(const Matrix& A, const Matrix& Q, const Matrix& X);
double dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q,
                     const Matrix& R, const Matrix& P);

}  // namespace cvpm
