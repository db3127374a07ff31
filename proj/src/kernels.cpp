#include "crt/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

namespace crt::kernels {
namespace {

// Shared per-element bodies so the serial and OpenMP loops cannot drift.
inline double shrink_scale(double norm, double tau) {
  return norm > tau ? (norm - tau) / norm : 0.0;
}

inline double soft(double x, double tau) {
  const double mag = std::abs(x) - tau;
  return mag > 0.0 ? std::copysign(mag, x) : 0.0;
}

inline double squared_distance(const double* a, const double* b, Eigen::Index n) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline double column_norm(const Matrix& m, Eigen::Index j) {
  return std::sqrt(m.col(j).squaredNorm());
}

}  // namespace

namespace serial {

Vector column_norms(const Matrix& m) {
  Vector out(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[j] = column_norm(m, j);
  return out;
}

Matrix shrink_columns(const Matrix& m, double tau) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    out.col(j) = shrink_scale(column_norm(m, j), tau) * m.col(j);
  }
  return out;
}

Matrix soft_threshold(const Matrix& m, double tau) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = soft(m(i, j), tau);
  }
  return out;
}

Matrix squared_distances(const Matrix& train, const Matrix& queries) {
  Matrix out(train.cols(), queries.cols());
  for (Eigen::Index q = 0; q < queries.cols(); ++q) {
    for (Eigen::Index i = 0; i < train.cols(); ++i) {
      out(i, q) = squared_distance(train.col(i).data(), queries.col(q).data(), train.rows());
    }
  }
  return out;
}

}  // namespace serial

namespace omp {

Vector column_norms(const Matrix& m) {
  Vector out(m.cols());
  const Eigen::Index cols = m.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < cols; ++j) out[j] = column_norm(m, j);
  return out;
}

Matrix shrink_columns(const Matrix& m, double tau) {
  Matrix out(m.rows(), m.cols());
  const Eigen::Index cols = m.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < cols; ++j) {
    out.col(j) = shrink_scale(column_norm(m, j), tau) * m.col(j);
  }
  return out;
}

Matrix soft_threshold(const Matrix& m, double tau) {
  Matrix out(m.rows(), m.cols());
  const Eigen::Index cols = m.cols();
  const Eigen::Index rows = m.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = soft(m(i, j), tau);
  }
  return out;
}

Matrix squared_distances(const Matrix& train, const Matrix& queries) {
  Matrix out(train.cols(), queries.cols());
  const Eigen::Index nq = queries.cols();
  const Eigen::Index nt = train.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index q = 0; q < nq; ++q) {
    for (Eigen::Index i = 0; i < nt; ++i) {
      out(i, q) = squared_distance(train.col(i).data(), queries.col(q).data(), train.rows());
    }
  }
  return out;
}

}  // namespace omp

int max_threads() { return omp_get_max_threads(); }

}  // namespace crt::kernels
