#include "crt/rpca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crt/error.hpp"
#include "crt/norms_prox.hpp"

namespace crt {

double rpca_default_lambda(int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw InvalidArgument("dimensions must be positive");
  return 1.0 / std::sqrt(static_cast<double>(std::max(rows, cols)));
}

RpcaResult rpca_decompose(const Matrix& x, double lambda, const SolverConfig& config) {
  config.validate();
  if (!(lambda > 0.0)) throw InvalidArgument("RPCA lambda must be positive");
  if (x.size() == 0) throw InvalidArgument("RPCA input is empty");
  if (!x.allFinite()) throw InvalidArgument("RPCA input has non-finite entries");

  RpcaResult result;
  result.low_rank = Matrix::Zero(x.rows(), x.cols());
  result.sparse = Matrix::Zero(x.rows(), x.cols());
  const double x_norm = x.norm();
  if (x_norm == 0.0) {
    result.report.converged = true;
    return result;
  }

  Matrix& y = result.low_rank;
  Matrix& s = result.sparse;
  Matrix multiplier = Matrix::Zero(x.rows(), x.cols());
  SolverReport& report = result.report;
  Matrix best = y;
  double best_objective = std::numeric_limits<double>::infinity();
  double rho = config.rho;
  double mu_start = config.mu0;
  double previous_primal = std::numeric_limits<double>::infinity();
  std::size_t pass_begin = 0;
  bool primal_ok = false;
  bool optimal = false;

  // Same pass structure as the robust CRT solver: pass 0 is the plain
  // schedule, later passes warm-start when the duality gap is still open.
  for (int pass = 0; pass < config.max_passes && report.iterations < config.max_iter; ++pass) {
    report.passes = pass + 1;
    primal_ok = false;
    for (int k = 0; report.iterations < config.max_iter; ++k) {
      const double mu = std::min(mu_start * std::pow(rho, k), config.mu_max);
      const SvdFactors f = svd(x - s + multiplier / mu);
      const Vector kept = (f.sigma.array() - 1.0 / mu).cwiseMax(0.0).matrix();
      y = f.u * kept.asDiagonal() * f.v.transpose();
      s = soft_threshold(x - y + multiplier / mu, lambda / mu);
      const Matrix residual = x - y - s;
      multiplier += mu * residual;

      IterationRecord rec;
      rec.mu = mu;
      rec.pass = pass;
      rec.objective = kept.sum() + lambda * (x - y).cwiseAbs().sum();
      rec.primal_data = residual.norm();
      rec.relative_data = rec.primal_data / x_norm;
      if (!std::isfinite(rec.objective)) {
        throw NumericalError("RPCA iterate became non-finite at iteration " +
                             std::to_string(report.iterations));
      }
      report.trace.push_back(rec);
      ++report.iterations;
      if (rec.objective < best_objective) {
        best_objective = rec.objective;
        best = y;
      }
      if (rec.relative_data <= config.tol) {
        primal_ok = true;
        break;
      }
    }
    if (!primal_ok) break;
    if (config.gap_tol <= 0.0) {
      optimal = true;
      break;
    }
    // After the S-step the multiplier already has max entry <= lambda, so the
    // dual point only needs scaling into the spectral-norm ball.
    const double primal = report.trace.back().objective;
    const double scale = std::max(1.0, singular_values(multiplier).maxCoeff());
    const double dual = multiplier.cwiseProduct(x).sum() / scale;
    report.duality_gap = (primal - dual) / std::max(1.0, primal);
    const bool stalled = pass > 0 && previous_primal - primal <= config.gap_tol * std::max(1.0, primal);
    if (report.duality_gap <= config.gap_tol || stalled) {
      optimal = true;
      break;
    }
    previous_primal = primal;
    for (std::size_t i = pass_begin; i < report.trace.size(); ++i) {
      if (report.trace[i].relative_data < 1e-3) {
        mu_start = std::max(config.mu0, report.trace[i].mu / 100.0);
        break;
      }
    }
    rho = std::sqrt(rho);
    pass_begin = report.trace.size();
  }

  report.converged = primal_ok && optimal;
  if (!report.converged) report.duality_gap = std::numeric_limits<double>::quiet_NaN();
  if (!report.converged || best_objective < report.trace.back().objective) y = std::move(best);

  s = x - y;
  return result;
}

Matrix synthesize_ground_truth(const LabeledDataset& z, double lambda, const SolverConfig& config,
                               bool per_class) {
  z.validate();
  auto decompose = [&](const Matrix& block) -> Matrix {
    if (block.cwiseAbs().maxCoeff() == 0.0) return Matrix::Zero(block.rows(), block.cols());
    const double lam = lambda > 0.0 ? lambda
                                    : rpca_default_lambda(static_cast<int>(block.rows()),
                                                          static_cast<int>(block.cols()));
    return rpca_decompose(block, lam, config).low_rank;
  };
  if (!per_class) return decompose(z.data);

  Matrix out(z.data.rows(), z.data.cols());
  for (int c = 0; c < z.num_classes(); ++c) {
    std::vector<int> cols;
    for (std::size_t j = 0; j < z.labels.size(); ++j) {
      if (z.labels[j] == c) cols.push_back(static_cast<int>(j));
    }
    Matrix block(z.data.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) block.col(static_cast<Eigen::Index>(j)) = z.data.col(cols[j]);
    const Matrix low = decompose(block);
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(cols[j]) = low.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

}  // namespace crt
