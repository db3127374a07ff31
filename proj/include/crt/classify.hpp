#pragma once

#include <span>
#include <vector>

#include "crt/matrix_io.hpp"

namespace crt {

// Majority vote among the k nearest training columns (Euclidean). Distance
// ties go to the lower column index; vote ties go to the class of the nearest
// member among the tied classes.
int knn_classify(const Matrix& train, std::span<const int> labels, const Vector& query, int k);
std::vector<int> knn_classify_batch(const Matrix& train, std::span<const int> labels,
                                    const Matrix& queries, int k);

// Unit Euclidean norm per column; zero columns stay zero.
Matrix normalize_columns(const Matrix& m);

struct SrcFit {
  Vector coefficients;
  double gamma = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

// 1e-3 * max |D^T y| over the column-normalized dictionary D.
double src_default_gamma(const Matrix& dictionary, const Vector& y);

// Sparse code of y over the column-normalized dictionary:
//   min 1/2 ||y - D alpha||^2 + gamma ||alpha||_1
// by monotone accelerated iterative shrinkage with step 1/||D||_2^2.
// gamma <= 0 selects src_default_gamma. Stops once the subgradient
// optimality residual drops below tol.
SrcFit src_fit(const Matrix& dictionary, const Vector& y, double gamma, int max_iter = 20000,
               double tol = 1e-6);

struct SrcSolution {
  Vector coefficients;
  std::vector<double> residuals_per_class;
  int predicted = 0;
};

// Class i residual ||y - D_i alpha_i|| uses only the columns labelled i.
// The dictionary is used as given; pass the normalized one src_fit coded over.
SrcSolution src_identity(const Matrix& dictionary, std::span<const int> labels, const Vector& y,
                         const Vector& alpha);

int src_classify(const Matrix& dictionary, std::span<const int> labels, const Vector& y,
                 double gamma);

struct PcaModel {
  Vector mean;
  Matrix components;  // p x d, orthonormal columns
};

PcaModel pca_fit(const Matrix& train, int d);
Vector pca_project(const PcaModel& model, const Vector& x);
Matrix pca_project(const PcaModel& model, const Matrix& x);
Matrix pca_reconstruct(const PcaModel& model, const Matrix& codes);

}  // namespace crt
