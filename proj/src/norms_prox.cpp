#include "crt/norms_prox.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "crt/error.hpp"
#include "crt/kernels.hpp"

namespace crt {
namespace {

void require_threshold(double tau) {
  if (!(tau >= 0.0)) throw InvalidArgument("threshold must be nonnegative");
}

void fix_signs(SvdFactors& f) {
  for (Eigen::Index k = 0; k < f.u.cols(); ++k) {
    Eigen::Index arg = 0;
    f.u.col(k).cwiseAbs().maxCoeff(&arg);  // first index on ties
    if (f.u(arg, k) < 0.0) {
      f.u.col(k) *= -1.0;
      f.v.col(k) *= -1.0;
    }
  }
}

Vector shrink(const Vector& sigma, double tau) {
  return (sigma.array() - tau).cwiseMax(0.0).matrix();
}

}  // namespace

SvdFactors svd(const Matrix& m) {
  if (m.size() == 0) throw InvalidArgument("svd of an empty matrix");
  Eigen::BDCSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw NumericalError("SVD failed to converge");
  SvdFactors f{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  if (!f.sigma.allFinite()) throw NumericalError("SVD produced non-finite singular values");
  fix_signs(f);
  return f;
}

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector();
  Eigen::BDCSVD<Matrix> solver(m);
  if (solver.info() != Eigen::Success) throw NumericalError("SVD failed to converge");
  return solver.singularValues();
}

double norm_l21(const Matrix& m) { return kernels::omp::column_norms(m).sum(); }

double norm_nuclear(const Matrix& m) { return singular_values(m).sum(); }

Matrix prox_nuclear(const Matrix& m, double tau) {
  require_threshold(tau);
  if (m.size() == 0) return m;
  const SvdFactors f = svd(m);
  return f.u * shrink(f.sigma, tau).asDiagonal() * f.v.transpose();
}

Matrix prox_nuclear_in_row_space(const Matrix& m, const Matrix& basis, double tau,
                                 double* shrunk_nuclear) {
  require_threshold(tau);
  if (basis.rows() != m.cols()) throw InvalidArgument("row-space basis has the wrong height");
  if (basis.cols() == 0) {
    if (shrunk_nuclear) *shrunk_nuclear = 0.0;
    return Matrix::Zero(m.rows(), m.cols());
  }
  const SvdFactors f = svd(m * basis);
  const Vector kept = shrink(f.sigma, tau);
  if (shrunk_nuclear) *shrunk_nuclear = kept.sum();
  return (f.u * kept.asDiagonal()) * (basis * f.v).transpose();
}

Matrix prox_l21_columns(const Matrix& p, double tau) {
  require_threshold(tau);
  return kernels::omp::shrink_columns(p, tau);
}

Matrix soft_threshold(const Matrix& m, double tau) {
  require_threshold(tau);
  return kernels::omp::soft_threshold(m, tau);
}

}  // namespace crt
