#pragma once

#include "crt/matrix_io.hpp"

// Column- and query-parallel inner loops. Every kernel has a serial reference
// and an OpenMP variant; each output element is computed by the same code on
// one thread, so both variants agree bit for bit.
namespace crt::kernels {

namespace serial {

Vector column_norms(const Matrix& m);
// out.col(j) = (1 - tau / ||m_j||)_+ m_j
Matrix shrink_columns(const Matrix& m, double tau);
Matrix soft_threshold(const Matrix& m, double tau);
// out(i, q) = ||train_i - queries_q||^2, evaluated directly (no norm expansion).
Matrix squared_distances(const Matrix& train, const Matrix& queries);

}  // namespace serial

namespace omp {

Vector column_norms(const Matrix& m);
Matrix shrink_columns(const Matrix& m, double tau);
Matrix soft_threshold(const Matrix& m, double tau);
Matrix squared_distances(const Matrix& train, const Matrix& queries);

}  // namespace omp

int max_threads();

}  // namespace crt::kernels
