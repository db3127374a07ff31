#pragma once

#include "crt/crt_solver.hpp"
#include "crt/matrix_io.hpp"

namespace crt {

struct RpcaResult {
  Matrix low_rank;
  Matrix sparse;  // exactly x - low_rank as computed in double precision
  SolverReport report;
};

// 1 / sqrt(max(rows, cols))
double rpca_default_lambda(int rows, int cols);

// Low-rank plus sparse split of x:
//   min ||Y||_* + lambda ||S||_1  s.t.  x = Y + S
// solved by inexact ALM with the penalty schedule in `config`, including the
// duality-gap passes controlled by gap_tol and max_passes. The trace
// objective is ||Y||_* + lambda ||x - Y||_1; primal_af is unused (zero).
RpcaResult rpca_decompose(const Matrix& x, double lambda, const SolverConfig& config = {});

// Approximate clean signals for a noisy training set: the low-rank part of
// its RPCA split. lambda <= 0 selects rpca_default_lambda. With per_class,
// each class block is decomposed separately.
Matrix synthesize_ground_truth(const LabeledDataset& z, double lambda,
                               const SolverConfig& config = {}, bool per_class = false);

}  // namespace crt
