#include "crt/crt_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "crt/error.hpp"
#include "crt/kernels.hpp"
#include "crt/norms_prox.hpp"

namespace crt {
namespace {

void require_same_shape(const Matrix& z0, const Matrix& z) {
  if (z0.rows() != z.rows() || z0.cols() != z.cols() || z.size() == 0) {
    throw InvalidArgument("clean and noisy training matrices must have the same nonzero shape");
  }
}

// Right-solves X (I + Z Z^T) = N. The SPD factorization is computed once;
// when Z has fewer columns than rows (m < p) the m x m Woodbury form
//   (I + Z Z^T)^{-1} = I - Z (I + Z^T Z)^{-1} Z^T
// is factored instead of the p x p system.
class AffineSystem {
 public:
  explicit AffineSystem(const Matrix& z) : z_(z), woodbury_(z.cols() < z.rows()) {
    const Eigen::Index k = woodbury_ ? z.cols() : z.rows();
    Matrix gram = woodbury_ ? Matrix(z.transpose() * z) : Matrix(z * z.transpose());
    gram.diagonal().array() += 1.0;
    llt_.compute(gram);
    if (llt_.info() != Eigen::Success) {
      throw NumericalError("factorization of I + Z Z^T failed (" + std::to_string(k) + "x" +
                           std::to_string(k) + ")");
    }
  }

  Matrix solve_right(const Matrix& n) const {
    if (woodbury_) {
      const Matrix nz = n * z_;
      return n - llt_.solve(nz.transpose()).transpose() * z_.transpose();
    }
    return llt_.solve(n.transpose()).transpose();
  }

 private:
  const Matrix& z_;
  bool woodbury_;
  Eigen::LLT<Matrix> llt_;
};

// Orthonormal basis Q (p x r) of range(Z). Every ALM iterate A, F and the
// multiplier on A - F has its rows in range(Z), so the solver stores the
// p x r coordinates B of A = B Q^T. Norms are unchanged by the map and
// A Z = B W with W = Q^T Z.
Matrix range_basis(const Matrix& z) {
  Eigen::BDCSVD<Matrix> solver(z, Eigen::ComputeThinU);
  if (solver.info() != Eigen::Success) throw NumericalError("SVD of training data failed");
  const Vector& sigma = solver.singularValues();
  const double cutoff = sigma.size() > 0 ? sigma[0] * static_cast<double>(std::max(z.rows(), z.cols())) *
                                               std::numeric_limits<double>::epsilon()
                                         : 0.0;
  Eigen::Index rank = 0;
  while (rank < sigma.size() && sigma[rank] > cutoff) ++rank;
  return solver.matrixU().leftCols(rank);
}

double loss_value(const Matrix& residual, LossMode loss) {
  return loss == LossMode::kL21 ? norm_l21(residual) : residual.squaredNorm();
}

}  // namespace

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kL21: return "l21";
    case LossMode::kFrobenius: return "frobenius";
    case LossMode::kRidge: return "ridge";
  }
  return "l21";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "l21") return LossMode::kL21;
  if (text == "frobenius") return LossMode::kFrobenius;
  if (text == "ridge") return LossMode::kRidge;
  throw InvalidArgument("unknown loss mode '" + text + "' (expected l21, frobenius or ridge)");
}

void SolverConfig::validate() const {
  if (!(mu0 > 0.0)) throw InvalidArgument("mu0 must be positive");
  if (!(rho > 1.0)) throw InvalidArgument("rho must exceed 1");
  if (!(mu_max >= mu0)) throw InvalidArgument("mu_max must be at least mu0");
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  if (max_iter <= 0) throw InvalidArgument("max_iter must be positive");
  if (max_passes <= 0) throw InvalidArgument("max_passes must be positive");
}

double SolverConfig::mu_at(int iteration) const {
  return std::min(mu0 * std::pow(rho, iteration), mu_max);
}

CrtModel fit_ridge(const Matrix& z0, const Matrix& z, double epsilon) {
  require_same_shape(z0, z);
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be nonnegative");
  Matrix gram = z * z.transpose();
  gram.diagonal().array() += epsilon;
  const Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw NumericalError("Z Z^T + epsilon I is singular; use epsilon > 0 for rank-deficient data");
  }
  CrtModel model;
  model.a = llt.solve(z * z0.transpose()).transpose();
  model.lambda = 0.0;
  model.loss_mode = LossMode::kRidge;
  model.iterations = 0;
  model.converged = true;
  return model;
}

Matrix step_f(const Matrix& a, const Matrix& lambda_e, double mu, double lambda) {
  if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
  return prox_nuclear(a + lambda_e / mu, lambda / mu);
}

Matrix step_e(const Matrix& z0, const Matrix& z, const Matrix& a, const Matrix& omega, double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
  return prox_l21_columns(z0 - a * z + omega / mu, 1.0 / mu);
}

Matrix step_a(const Matrix& z0, const Matrix& z, const Matrix& e, const Matrix& f,
              const Matrix& lambda_e, const Matrix& omega, double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
  const AffineSystem system(z);
  return system.solve_right(f + (z0 - e + omega / mu) * z.transpose() - lambda_e / mu);
}

FitResult fit_robust(const Matrix& z0, const Matrix& z, double lambda, LossMode loss,
                     const SolverConfig& config) {
  require_same_shape(z0, z);
  config.validate();
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
  if (loss == LossMode::kRidge) throw InvalidArgument("ridge mode has a closed form; use fit_ridge");

  const Eigen::Index p = z.rows();
  const Eigen::Index m = z.cols();
  const Matrix q = range_basis(z);
  const Eigen::Index r = q.cols();
  const Matrix w = q.transpose() * z;
  const double z0_norm = z0.norm();

  // (I + Z Z^T)^{-1} restricted to range(Z) is (I + W W^T)^{-1} in coordinates.
  Matrix gram = w * w.transpose();
  gram.diagonal().array() += 1.0;
  const Eigen::LLT<Matrix> system(gram);
  if (system.info() != Eigen::Success) throw NumericalError("factorization of I + Z Z^T failed");

  Matrix b = Matrix::Zero(p, r);
  Matrix f = Matrix::Zero(p, r);
  Matrix e = Matrix::Zero(p, m);
  Matrix lambda_e = Matrix::Zero(p, r);
  Matrix omega = Matrix::Zero(p, m);
  Matrix subgradient = Matrix::Zero(p, m);

  FitResult result;
  SolverReport& report = result.report;
  Matrix best = b;
  double best_objective = std::numeric_limits<double>::infinity();
  double rho = config.rho;
  double mu_start = config.mu0;
  double previous_primal = std::numeric_limits<double>::infinity();
  std::size_t pass_begin = 0;
  bool primal_ok = false;
  bool optimal = false;

  for (int pass = 0; pass < config.max_passes && report.iterations < config.max_iter; ++pass) {
    report.passes = pass + 1;
    primal_ok = false;
    for (int k = 0; report.iterations < config.max_iter; ++k) {
      const double mu = std::min(mu_start * std::pow(rho, k), config.mu_max);

      f = r > 0 ? prox_nuclear(b + lambda_e / mu, lambda / mu) : f;

      const Matrix p_mat = z0 - b * w + omega / mu;
      e = loss == LossMode::kL21 ? prox_l21_columns(p_mat, 1.0 / mu)
                                 : Matrix(mu / (2.0 + mu) * p_mat);
      subgradient = mu * (p_mat - e);

      b = system.solve((f + (z0 - e + omega / mu) * w.transpose() - lambda_e / mu).transpose())
              .transpose();

      const Matrix fit_residual = z0 - b * w;
      const Matrix r_af = b - f;
      const Matrix r_data = fit_residual - e;
      lambda_e += mu * r_af;
      omega += mu * r_data;

      IterationRecord rec;
      rec.mu = mu;
      rec.pass = pass;
      rec.objective = loss_value(fit_residual, loss) + (r > 0 ? lambda * singular_values(b).sum() : 0.0);
      rec.primal_af = r_af.norm();
      rec.primal_data = r_data.norm();
      rec.relative_af = rec.primal_af / std::max(1.0, f.norm());
      rec.relative_data = rec.primal_data / std::max(1.0, z0_norm);
      if (!std::isfinite(rec.objective) || !std::isfinite(rec.primal_af) ||
          !std::isfinite(rec.primal_data)) {
        throw NumericalError("ALM iterate became non-finite at iteration " +
                             std::to_string(report.iterations));
      }
      report.trace.push_back(rec);
      ++report.iterations;

      if (rec.objective < best_objective) {
        best_objective = rec.objective;
        best = b;
      }
      if (rec.relative_af <= config.tol && rec.relative_data <= config.tol) {
        primal_ok = true;
        break;
      }
    }
    if (!primal_ok) break;
    if (config.gap_tol <= 0.0) {
      optimal = true;
      break;
    }
    // The E-step subgradient is the dual candidate: its columns already have
    // norm <= 1, so only the nuclear-norm constraint needs rescaling.
    const double primal = report.trace.back().objective;
    report.duality_gap =
        (primal - dual_bound(z0, z, subgradient, lambda, loss)) / std::max(1.0, primal);
    // A warm restart that no longer lowers the objective also ends the
    // search: the gap bound can stay loose when many residual columns are
    // exactly zero, because their multipliers are not pinned by the primal.
    const bool stalled = pass > 0 && previous_primal - primal <= config.gap_tol * std::max(1.0, primal);
    if (report.duality_gap <= config.gap_tol || stalled) {
      optimal = true;
      break;
    }
    previous_primal = primal;
    // Feasible but not optimal. Warm-start another pass from the current
    // iterate and multipliers: the penalty restarts two decades below where
    // this pass first got both residuals under 1e-3 and ramps more gently.
    for (std::size_t i = pass_begin; i < report.trace.size(); ++i) {
      const IterationRecord& rec = report.trace[i];
      if (rec.relative_af < 1e-3 && rec.relative_data < 1e-3) {
        mu_start = std::max(config.mu0, rec.mu / 100.0);
        break;
      }
    }
    rho = std::sqrt(rho);
    pass_begin = report.trace.size();
  }

  report.converged = primal_ok && optimal;
  if (!report.converged) {
    b = std::move(best);
    report.duality_gap = std::numeric_limits<double>::quiet_NaN();
  } else if (best_objective < report.trace.back().objective) {
    // A stalled restart can finish above an earlier iterate.
    b = std::move(best);
  }
  result.model.a = b * q.transpose();
  result.model.lambda = lambda;
  result.model.loss_mode = loss;
  result.model.iterations = report.iterations;
  result.model.converged = report.converged;
  return result;
}

double dual_bound(const Matrix& z0, const Matrix& z, const Matrix& omega, double lambda,
                  LossMode loss) {
  require_same_shape(z0, z);
  if (omega.rows() != z0.rows() || omega.cols() != z0.cols()) {
    throw InvalidArgument("multiplier must match the shape of Z0");
  }
  if (loss == LossMode::kRidge) throw InvalidArgument("no dual bound for ridge mode");
  Matrix w = omega;
  if (lambda == 0.0) {
    // Dual feasibility then needs w Z^T = 0: drop the component of each row
    // of w that lies in the row space of Z.
    const SvdFactors zt = svd(z.transpose());
    const double cutoff = zt.sigma.size() > 0 ? zt.sigma[0] * 1e-12 : 0.0;
    for (Eigen::Index i = 0; i < zt.sigma.size() && zt.sigma[i] > cutoff; ++i) {
      w -= (w * zt.u.col(i)) * zt.u.col(i).transpose();
    }
  }
  double scale = 1.0;
  if (lambda > 0.0) scale = std::max(scale, singular_values(w * z.transpose()).maxCoeff() / lambda);
  if (loss == LossMode::kL21) {
    scale = std::max(scale, kernels::omp::column_norms(w).maxCoeff());
    return std::max(0.0, w.cwiseProduct(z0).sum()) / scale;
  }
  // Frobenius loss: maximize t <w, Z0> - t^2 ||w||^2 / 4 over 0 <= t <= 1 / scale.
  const double inner = w.cwiseProduct(z0).sum();
  const double sq = w.squaredNorm();
  if (sq == 0.0 || inner <= 0.0) return 0.0;
  const double t = std::min(2.0 * inner / sq, 1.0 / scale);
  return t * inner - t * t * sq / 4.0;
}

Matrix recover(const CrtModel& model, const Matrix& x) {
  if (x.rows() != model.p()) {
    throw InvalidArgument("dimension mismatch: model expects " + std::to_string(model.p()) +
                          " rows, input has " + std::to_string(x.rows()));
  }
  return model.a * x;
}

double objective(const Matrix& z0, const Matrix& z, const Matrix& a, double lambda, LossMode loss) {
  require_same_shape(z0, z);
  if (a.rows() != z.rows() || a.cols() != z.rows()) throw InvalidArgument("A must be p x p");
  const Matrix residual = z0 - a * z;
  if (loss == LossMode::kRidge) return residual.squaredNorm();
  return loss_value(residual, loss) + lambda * norm_nuclear(a);
}

void export_basis(const CrtModel& model, int height, int width, const std::filesystem::path& dir,
                  int count) {
  if (static_cast<long long>(height) * width != model.p()) {
    throw InvalidArgument("geometry mismatch: " + std::to_string(height) + "x" +
                          std::to_string(width) + " != p = " + std::to_string(model.p()));
  }
  if (count <= 0 || count > model.p()) {
    throw InvalidArgument("basis count must lie in 1.." + std::to_string(model.p()));
  }
  std::filesystem::create_directories(dir);
  char name[32];
  for (int k = 0; k < count; ++k) {
    std::snprintf(name, sizeof name, "basis_%03d.pgm", k);
    export_image_pgm(model.a.col(k), height, width, dir / name);
  }
}

void save_model(const CrtModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_matrix(model.a, dir / "transform.crtm", MatrixFormat::kBinary);
  write_key_values({{"lambda", format_number(model.lambda)},
                    {"loss_mode", to_string(model.loss_mode)},
                    {"p", std::to_string(model.p())},
                    {"iterations", std::to_string(model.iterations)},
                    {"converged", model.converged ? "true" : "false"}},
                   dir / "model.txt");
}

CrtModel load_model(const std::filesystem::path& dir) {
  const KeyValues meta = read_key_values(dir / "model.txt");
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("model metadata lacks '" + key + "'");
    return it->second;
  };
  CrtModel model;
  model.a = load_matrix(dir / "transform.crtm", MatrixFormat::kBinary);
  model.lambda = std::stod(get("lambda"));
  model.loss_mode = parse_loss_mode(get("loss_mode"));
  model.iterations = std::stoi(get("iterations"));
  model.converged = get("converged") == "true";
  if (model.a.rows() != model.a.cols() || std::stoi(get("p")) != model.p()) {
    throw ParseError("model transform is not p x p with the recorded p");
  }
  return model;
}

void write_trace_csv(const SolverReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,pass,mu,objective,primal_af,primal_data,relative_af,relative_data\n";
  for (std::size_t k = 0; k < report.trace.size(); ++k) {
    const auto& r = report.trace[k];
    out << k << ',' << r.pass << ',' << format_number(r.mu) << ',' << format_number(r.objective) << ','
        << format_number(r.primal_af) << ',' << format_number(r.primal_data) << ','
        << format_number(r.relative_af) << ',' << format_number(r.relative_data) << '\n';
  }
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace crt
