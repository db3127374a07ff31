#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "crt/matrix_io.hpp"

namespace crt {

enum class LossMode { kL21, kFrobenius, kRidge };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

// Penalty schedule for the augmented Lagrangian solvers. At iteration k
// (0-based) the penalty is min(mu0 * rho^k, mu_max).
//
// fit_robust additionally checks a duality-gap certificate once the primal
// residuals are below tol. A fast penalty ramp can freeze the iterates at a
// feasible but suboptimal point; when the relative gap exceeds gap_tol the
// solver warm-starts another pass with the ramp rate replaced by sqrt(rho),
// up to max_passes passes in total. gap_tol <= 0 disables the extra passes.
// max_iter bounds the iterations summed over all passes.
struct SolverConfig {
  double mu0 = 1e-6;
  double rho = 1.2;
  double mu_max = 1e10;
  double tol = 1e-7;
  int max_iter = 1000;
  double gap_tol = 1e-6;
  int max_passes = 4;

  void validate() const;
  double mu_at(int iteration) const;
};

struct IterationRecord {
  double objective = 0.0;
  double primal_af = 0.0;    // ||A - F||_F
  double primal_data = 0.0;  // ||Z0 - A Z - E||_F
  double relative_af = 0.0;
  double relative_data = 0.0;
  double mu = 0.0;
  int pass = 0;
};

struct SolverReport {
  int iterations = 0;
  std::vector<IterationRecord> trace;
  bool converged = false;
  int passes = 0;
  // (primal - dual) / max(1, primal) at the returned iterate; NaN when no
  // certificate was computed.
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
};

struct CrtModel {
  Matrix a;  // p x p
  double lambda = 0.0;
  LossMode loss_mode = LossMode::kL21;
  int iterations = 0;
  bool converged = true;

  int p() const { return static_cast<int>(a.rows()); }
};

struct FitResult {
  CrtModel model;
  SolverReport report;
};

// A = Z0 Z^T (Z Z^T + epsilon I)^{-1}
CrtModel fit_ridge(const Matrix& z0, const Matrix& z, double epsilon);

// The three closed-form ALM sub-steps for
//   min ||E||_{2,1} + lambda ||F||_*  s.t.  F = A,  E = Z0 - A Z.
// `lambda_e` multiplies A - F and `omega` multiplies Z0 - A Z - E.
Matrix step_f(const Matrix& a, const Matrix& lambda_e, double mu, double lambda);
Matrix step_e(const Matrix& z0, const Matrix& z, const Matrix& a, const Matrix& omega, double mu);
Matrix step_a(const Matrix& z0, const Matrix& z, const Matrix& e, const Matrix& f,
              const Matrix& lambda_e, const Matrix& omega, double mu);

// Learns A by the augmented Lagrange multiplier iteration. kL21 minimizes
// ||Z0 - A Z||_{2,1} + lambda ||A||_*, kFrobenius the squared-Frobenius loss.
// converged means the primal residuals met tol and, unless disabled, the
// duality gap met gap_tol. Otherwise the iterate with the lowest objective is
// returned with converged = false; nothing is thrown.
FitResult fit_robust(const Matrix& z0, const Matrix& z, double lambda, LossMode loss,
                     const SolverConfig& config = {});

// A * x
Matrix recover(const CrtModel& model, const Matrix& x);

double objective(const Matrix& z0, const Matrix& z, const Matrix& a, double lambda, LossMode loss);

// Lower bound on the optimal objective from a multiplier omega (p x m) on
// Z0 - A Z - E: omega is rescaled into the dual feasible set
// { ||omega Z^T||_2 <= lambda, column norms <= 1 for kL21 } and the dual
// objective evaluated there. Returns -inf when no rescaling is feasible.
double dual_bound(const Matrix& z0, const Matrix& z, const Matrix& omega, double lambda,
                  LossMode loss);

// Writes basis_000.pgm ... for the first `count` columns of A.
void export_basis(const CrtModel& model, int height, int width,
                  const std::filesystem::path& dir, int count = 32);

// <dir>/transform.crtm plus <dir>/model.txt metadata.
void save_model(const CrtModel& model, const std::filesystem::path& dir);
CrtModel load_model(const std::filesystem::path& dir);

void write_trace_csv(const SolverReport& report, const std::filesystem::path& path);

}  // namespace crt
