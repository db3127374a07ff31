#include "crt/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crt/error.hpp"
#include "crt/kernels.hpp"
#include "crt/norms_prox.hpp"

namespace crt {
namespace {

int vote(const Eigen::Ref<const Vector>& distances, std::span<const int> labels, int k) {
  std::vector<int> order(static_cast<std::size_t>(distances.size()));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    return distances[a] < distances[b] || (distances[a] == distances[b] && a < b);
  });
  std::vector<int> counts(static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1), 0);
  for (int i = 0; i < k; ++i) ++counts[labels[order[i]]];
  const int best = *std::max_element(counts.begin(), counts.end());
  for (int i = 0; i < k; ++i) {
    if (counts[labels[order[i]]] == best) return labels[order[i]];
  }
  return labels[order[0]];
}

void check_knn_inputs(const Matrix& train, std::span<const int> labels, Eigen::Index query_rows, int k) {
  if (train.cols() == 0) throw InvalidArgument("empty training set");
  if (static_cast<Eigen::Index>(labels.size()) != train.cols()) {
    throw InvalidArgument("label count does not match training columns");
  }
  if (query_rows != train.rows()) throw InvalidArgument("query length does not match training rows");
  if (k < 1 || k > train.cols()) throw InvalidArgument("k must lie in 1..n");
  if (*std::min_element(labels.begin(), labels.end()) < 0) throw InvalidArgument("negative label");
}

double lasso_objective(const Matrix& d, const Vector& y, const Vector& alpha, double gamma) {
  return 0.5 * (y - d * alpha).squaredNorm() + gamma * alpha.lpNorm<1>();
}

double optimality_residual(const Vector& grad, const Vector& alpha, double gamma) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    const double r = alpha[j] != 0.0 ? std::abs(grad[j] + std::copysign(gamma, alpha[j]))
                                     : std::max(std::abs(grad[j]) - gamma, 0.0);
    worst = std::max(worst, r);
  }
  return worst;
}

}  // namespace

int knn_classify(const Matrix& train, std::span<const int> labels, const Vector& query, int k) {
  check_knn_inputs(train, labels, query.size(), k);
  const Matrix d = kernels::serial::squared_distances(train, query);
  return vote(d.col(0), labels, k);
}

std::vector<int> knn_classify_batch(const Matrix& train, std::span<const int> labels,
                                    const Matrix& queries, int k) {
  check_knn_inputs(train, labels, queries.rows(), k);
  const Matrix d = kernels::omp::squared_distances(train, queries);
  std::vector<int> out(static_cast<std::size_t>(queries.cols()));
  for (Eigen::Index q = 0; q < queries.cols(); ++q) out[q] = vote(d.col(q), labels, k);
  return out;
}

Matrix normalize_columns(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double n = m.col(j).norm();
    if (n > 0.0) out.col(j) /= n;
  }
  return out;
}

double src_default_gamma(const Matrix& dictionary, const Vector& y) {
  const Matrix d = normalize_columns(dictionary);
  return 1e-3 * (d.transpose() * y).cwiseAbs().maxCoeff();
}

SrcFit src_fit(const Matrix& dictionary, const Vector& y, double gamma, int max_iter, double tol) {
  if (dictionary.cols() == 0) throw InvalidArgument("empty dictionary");
  if (y.size() != dictionary.rows()) throw InvalidArgument("query length does not match dictionary");
  if (max_iter <= 0) throw InvalidArgument("max_iter must be positive");

  const Matrix d = normalize_columns(dictionary);
  const Eigen::Index n = d.cols();
  SrcFit fit;
  fit.gamma = gamma > 0.0 ? gamma : 1e-3 * (d.transpose() * y).cwiseAbs().maxCoeff();
  fit.coefficients = Vector::Zero(n);
  const double lipschitz = singular_values(d).maxCoeff();
  if (y.squaredNorm() == 0.0 || lipschitz == 0.0) {
    fit.converged = true;
    fit.objective_trace.push_back(0.5 * y.squaredNorm());
    return fit;
  }
  const double step = 1.0 / (lipschitz * lipschitz);

  // Monotone FISTA: the accepted iterate never increases the objective.
  Vector x = Vector::Zero(n);
  Vector x_prev = x;
  Vector probe = x;
  double t = 1.0;
  double fx = lasso_objective(d, y, x, fit.gamma);
  fit.objective_trace.push_back(fx);
  for (int it = 1; it <= max_iter; ++it) {
    const Vector grad = d.transpose() * (d * probe - y);
    Vector z = probe - step * grad;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double mag = std::abs(z[j]) - step * fit.gamma;
      z[j] = mag > 0.0 ? std::copysign(mag, z[j]) : 0.0;
    }
    const double fz = lasso_objective(d, y, z, fit.gamma);
    x_prev = x;
    if (fz <= fx) {
      x = z;
      fx = fz;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    probe = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
    t = t_next;
    fit.objective_trace.push_back(fx);
    fit.iterations = it;
    if (optimality_residual(d.transpose() * (d * x - y), x, fit.gamma) <= tol) {
      fit.converged = true;
      break;
    }
  }
  fit.coefficients = x;
  return fit;
}

SrcSolution src_identity(const Matrix& dictionary, std::span<const int> labels, const Vector& y,
                         const Vector& alpha) {
  if (alpha.size() != dictionary.cols() || static_cast<Eigen::Index>(labels.size()) != dictionary.cols()) {
    throw InvalidArgument("coefficient and label counts must match dictionary columns");
  }
  if (y.size() != dictionary.rows()) throw InvalidArgument("query length does not match dictionary");
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  SrcSolution sol;
  sol.coefficients = alpha;
  sol.residuals_per_class.resize(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    Vector partial = Vector::Zero(dictionary.rows());
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] == c && alpha[static_cast<Eigen::Index>(j)] != 0.0) {
        partial += alpha[static_cast<Eigen::Index>(j)] * dictionary.col(static_cast<Eigen::Index>(j));
      }
    }
    sol.residuals_per_class[c] = (y - partial).norm();
  }
  // min_element returns the first minimum, so ties go to the lowest class id.
  sol.predicted = static_cast<int>(
      std::min_element(sol.residuals_per_class.begin(), sol.residuals_per_class.end()) -
      sol.residuals_per_class.begin());
  return sol;
}

int src_classify(const Matrix& dictionary, std::span<const int> labels, const Vector& y,
                 double gamma) {
  const Matrix d = normalize_columns(dictionary);
  const SrcFit fit = src_fit(d, y, gamma);
  return src_identity(d, labels, y, fit.coefficients).predicted;
}

PcaModel pca_fit(const Matrix& train, int d) {
  if (d < 1 || d > std::min(train.rows(), train.cols())) {
    throw InvalidArgument("PCA dimension " + std::to_string(d) + " exceeds min(p, n) = " +
                          std::to_string(std::min(train.rows(), train.cols())));
  }
  PcaModel model;
  model.mean = train.rowwise().mean();
  const Matrix centered = train.colwise() - model.mean;
  model.components = svd(centered).u.leftCols(d);
  return model;
}

Vector pca_project(const PcaModel& model, const Vector& x) {
  if (x.size() != model.mean.size()) throw InvalidArgument("PCA input length mismatch");
  return model.components.transpose() * (x - model.mean);
}

Matrix pca_project(const PcaModel& model, const Matrix& x) {
  if (x.rows() != model.mean.size()) throw InvalidArgument("PCA input length mismatch");
  return model.components.transpose() * (x.colwise() - model.mean);
}

Matrix pca_reconstruct(const PcaModel& model, const Matrix& codes) {
  return (model.components * codes).colwise() + model.mean;
}

}  // namespace crt
