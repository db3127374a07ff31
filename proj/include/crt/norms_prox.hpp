#pragma once

#include "crt/matrix_io.hpp"

namespace crt {

// Thin SVD m = u * diag(sigma) * v^T with sigma non-increasing. Signs are
// fixed so the largest-magnitude entry of every u column is nonnegative,
// which makes the factors reproducible for a given input.
struct SvdFactors {
  Matrix u;
  Vector sigma;
  Matrix v;
};

SvdFactors svd(const Matrix& m);
Vector singular_values(const Matrix& m);

// Sum of Euclidean column norms.
double norm_l21(const Matrix& m);
double norm_nuclear(const Matrix& m);

// argmin_F tau * ||F||_* + 1/2 ||F - m||_F^2  (singular value thresholding)
Matrix prox_nuclear(const Matrix& m, double tau);

// Same operator for a matrix whose row space lies in span(basis), where
// basis has orthonormal columns. Only the p x r product m * basis is
// factored. `shrunk_nuclear`, when given, receives ||result||_*.
Matrix prox_nuclear_in_row_space(const Matrix& m, const Matrix& basis, double tau,
                                 double* shrunk_nuclear = nullptr);

// argmin_E tau * ||E||_{2,1} + 1/2 ||E - p||_F^2, column by column.
Matrix prox_l21_columns(const Matrix& p, double tau);

// Entrywise sign(m) * max(|m| - tau, 0).
Matrix soft_threshold(const Matrix& m, double tau);

}  // namespace crt
