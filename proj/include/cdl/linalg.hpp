#pragma once

#include <Eigen/Dense>

namespace cdl {

// Dense, column-major, 64-bit. Batches of vectors are stored one sample per row.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thin SVD: for an r x c input with k = min(r, c), u is r x k with orthonormal
// columns, s holds k non-negative values in non-increasing order and vt is
// k x c with orthonormal rows.
struct SvdResult {
  Matrix u;
  Vector s;
  Matrix vt;
};

// One-sided Jacobi SVD. Throws NumericError on non-finite input or if the
// sweeps fail to converge.
SvdResult svd(const Matrix& m);

// Sum of singular values.
double trace_norm(const Matrix& m);

// Eigenpairs of a symmetric matrix, values ascending.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};

// (A + A^T) / 2. Throws NumericError if A is not square.
Matrix symmetrize(const Matrix& a);

// Symmetrizes, then decomposes. Throws NumericError if the input is not
// square, not finite, or off symmetric by more than 1e-10 relative.
SymmetricEigen symmetric_eigen(const Matrix& a);

// (A + mu I)^{1/2} for symmetric PSD A, mu >= 0. Eigenvalues in
// [-1e-8, 0) are clamped to zero; anything below throws NumericError.
Matrix psd_sqrt(const Matrix& a, double mu);

// (A + mu I)^{-1/2}; mu must be strictly positive.
Matrix psd_inv_sqrt(const Matrix& a, double mu);

// Both roots of (A + mu I) from a single decomposition; mu > 0.
struct PsdRoots {
  Matrix sqrt;
  Matrix inv_sqrt;
};
PsdRoots psd_roots(const Matrix& a, double mu);

// Inverse of a symmetric positive-definite matrix through its
// eigendecomposition. Throws NumericError if any eigenvalue is not positive.
Matrix spd_inverse(const Matrix& a);

bool all_finite(const Matrix& m);

}  // namespace cdl
