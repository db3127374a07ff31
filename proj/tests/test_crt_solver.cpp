#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <string>

#include "crt/crt_solver.hpp"
#include "crt/error.hpp"
#include "crt/norms_prox.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

namespace crt {
namespace {

using testing::TempDir;

struct Instance {
  Matrix z0;
  Matrix z;
};

Instance noisy_instance(int p, int m, std::uint64_t seed, double noise = 0.3) {
  Matrix z = oracle::random_matrix(p, m, seed);
  return {z + noise * oracle::random_matrix(p, m, seed + 7777), z};
}

// Augmented Lagrangian restricted to A (the objective minimized by step_a).
double step_a_objective(const Matrix& a, const Matrix& z0, const Matrix& z, const Matrix& e,
                        const Matrix& f, const Matrix& lam, const Matrix& omega, double mu) {
  return 0.5 * mu * (a - f + lam / mu).squaredNorm() +
         0.5 * mu * (z0 - a * z - e + omega / mu).squaredNorm();
}

TEST(FitRidge, ScalarExample) {
  const CrtModel m = fit_ridge(Matrix::Constant(1, 1, 6.0), Matrix::Constant(1, 1, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(m.a(0, 0), 3.0);
  EXPECT_EQ(m.loss_mode, LossMode::kRidge);
  EXPECT_EQ(m.p(), 1);
}

TEST(FitRidge, IdentityInputReturnsTarget) {
  const Matrix target = oracle::random_matrix(3, 3, 1);
  EXPECT_LT((fit_ridge(target, Matrix::Identity(3, 3), 0.0).a - target).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitRidge, NormalEquationsHold) {
  for (int t = 0; t < 5; ++t) {
    const Instance in = noisy_instance(4, 10, 10 + t);
    const Matrix a = fit_ridge(in.z0, in.z, 0.0).a;
    EXPECT_LT(((in.z0 - a * in.z) * in.z.transpose()).norm(), 1e-8 * std::max(1.0, in.z0.norm()));
  }
}

TEST(FitRidge, SingularSystemAdvisesEpsilon) {
  const Matrix z = oracle::random_matrix(5, 3, 2);  // rank 3 < p
  try {
    fit_ridge(z, z, 0.0);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epsilon > 0"), std::string::npos);
  }
  const CrtModel jittered = fit_ridge(z, z, 1e-3);
  EXPECT_TRUE(jittered.a.allFinite());
}

TEST(FitRidge, RejectsBadInput) {
  EXPECT_THROW(fit_ridge(Matrix::Zero(2, 3), Matrix::Zero(2, 4), 0.1), InvalidArgument);
  EXPECT_THROW(fit_ridge(Matrix::Identity(2, 2), Matrix::Identity(2, 2), -1.0), InvalidArgument);
}

TEST(StepF, Examples) {
  const Matrix a = Eigen::Vector2d(3, 1).asDiagonal().toDenseMatrix();
  const Matrix f = step_f(a, Matrix::Zero(2, 2), 1.0, 2.0);
  EXPECT_NEAR(f(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(f(1, 1), 0.0, 1e-12);
  const Matrix r = oracle::random_matrix(4, 4, 3);
  const Matrix lam = oracle::random_matrix(4, 4, 4);
  EXPECT_LT((step_f(r, lam, 2.0, 0.0) - (r + lam / 2.0)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(step_f(r, lam, 0.0, 1.0), InvalidArgument);
}

TEST(StepF, MinimizesSubproblem) {
  const Matrix a = oracle::random_matrix(5, 5, 5);
  const Matrix lam = oracle::random_matrix(5, 5, 6);
  const double mu = 1.7, lambda = 0.9;
  auto sub = [&](const Matrix& f) {
    return lambda * oracle::nuclear_jacobi(f) + 0.5 * mu * (a - f + lam / mu).squaredNorm();
  };
  const Matrix f = step_f(a, lam, mu, lambda);
  EXPECT_GE(oracle::best_perturbed(sub, f, 200, 7), sub(f) - 1e-12);
}

TEST(StepE, Examples) {
  Matrix z0(2, 1);
  z0 << 3, 4;
  const Matrix e = step_e(z0, Matrix::Zero(2, 1), Matrix::Zero(2, 2), Matrix::Zero(2, 1), 1.0);
  EXPECT_NEAR(e(0, 0), 2.4, 1e-15);
  EXPECT_NEAR(e(1, 0), 3.2, 1e-15);
  const Matrix z = oracle::random_matrix(3, 4, 1);
  const Matrix a = oracle::random_matrix(3, 3, 2);
  EXPECT_EQ(step_e(a * z, z, a, Matrix::Zero(3, 4), 2.0), Matrix::Zero(3, 4));
}

TEST(StepE, MatchesGoldenSection) {
  const Instance in = noisy_instance(4, 6, 20);
  const Matrix a = oracle::random_matrix(4, 4, 21);
  const Matrix omega = oracle::random_matrix(4, 6, 22);
  const double mu = 0.8;
  const Matrix e = step_e(in.z0, in.z, a, omega, mu);
  const Matrix p = in.z0 - a * in.z + omega / mu;
  for (int j = 0; j < 6; ++j) {
    const double n = p.col(j).norm();
    const double t = oracle::golden_section(
        [&](double s) { return s / mu + 0.5 * (s - n) * (s - n); }, 0.0, n + 1.0);
    EXPECT_LT((e.col(j) - p.col(j) * (t / n)).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(StepA, ZeroDataReturnsF) {
  const Matrix f = oracle::random_matrix(3, 3, 1);
  const Matrix a = step_a(Matrix::Zero(3, 4), Matrix::Zero(3, 4), Matrix::Zero(3, 4), f,
                          Matrix::Zero(3, 3), Matrix::Zero(3, 4), 2.0);
  EXPECT_LT((a - f).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(StepA, PlainSubstitution) {
  for (int m : {3, 9}) {  // both the direct and the Woodbury solve
    const Instance in = noisy_instance(5, m, 30 + m);
    const Matrix a = step_a(in.z0, in.z, Matrix::Zero(5, m), Matrix::Zero(5, 5), Matrix::Zero(5, 5),
                            Matrix::Zero(5, m), 1.0);
    const Matrix expected = in.z0 * in.z.transpose() *
                            (Matrix::Identity(5, 5) + in.z * in.z.transpose()).inverse();
    EXPECT_LT((a - expected).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(StepA, StationaryAndIdentity) {
  for (int m : {3, 8}) {
    const Instance in = noisy_instance(5, m, 40 + m);
    const Matrix e = oracle::random_matrix(5, m, 1);
    const Matrix f = oracle::random_matrix(5, 5, 2);
    const Matrix lam = oracle::random_matrix(5, 5, 3);
    const Matrix omega = oracle::random_matrix(5, m, 4);
    const double mu = 1.3;
    const Matrix a = step_a(in.z0, in.z, e, f, lam, omega, mu);

    const Matrix grad = oracle::finite_difference_gradient(
        [&](const Matrix& x) { return step_a_objective(x, in.z0, in.z, e, f, lam, omega, mu); }, a);
    EXPECT_LT(grad.cwiseAbs().maxCoeff(), 1e-5);

    const Matrix numerator = f + (in.z0 - e + omega / mu) * in.z.transpose() - lam / mu;
    const Matrix rebuilt = a * (Matrix::Identity(5, 5) + in.z * in.z.transpose());
    EXPECT_LT((rebuilt - numerator).norm() / numerator.norm(), 1e-10);
  }
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.mu0, 1e-6);
  EXPECT_EQ(c.rho, 1.2);
  EXPECT_EQ(c.mu_max, 1e10);
  EXPECT_EQ(c.tol, 1e-7);
  EXPECT_EQ(c.max_iter, 1000);
  auto bad = [](auto edit) {
    SolverConfig s;
    edit(s);
    return s;
  };
  EXPECT_THROW(bad([](SolverConfig& s) { s.mu0 = 0; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](SolverConfig& s) { s.rho = 1.0; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](SolverConfig& s) { s.mu_max = 1e-7; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](SolverConfig& s) { s.tol = 0; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](SolverConfig& s) { s.max_iter = 0; }).validate(), InvalidArgument);
  EXPECT_THROW(bad([](SolverConfig& s) { s.max_passes = 0; }).validate(), InvalidArgument);
}

TEST(SolverConfig, PenaltySchedule) {
  const SolverConfig c;
  EXPECT_EQ(c.mu_at(0), 1e-6);
  EXPECT_EQ(c.mu_at(10), 1e-6 * std::pow(1.2, 10));
  EXPECT_EQ(c.mu_at(500), 1e10);
}

TEST(FitRobust, ZeroTargetGivesZeroTransform) {
  const Matrix z = oracle::random_matrix(4, 7, 1);
  const FitResult r = fit_robust(Matrix::Zero(4, 7), z, 0.1, LossMode::kL21);
  EXPECT_LT(r.model.a.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitRobust, LargeLambdaShutsTransformOff) {
  // A = 0 is optimal once lambda >= ||G Z^T||_2 with G the normalized columns
  // of Z0, since G is then a subgradient certificate.
  const Instance in = noisy_instance(4, 9, 2);
  Matrix g = in.z0;
  for (Eigen::Index j = 0; j < g.cols(); ++j) g.col(j).normalize();
  const double threshold = oracle::jacobi_singular_values(g * in.z.transpose()).maxCoeff();
  const double lambda = 2.0 * threshold;
  const FitResult r = fit_robust(in.z0, in.z, lambda, LossMode::kL21);
  EXPECT_LT(r.model.a.cwiseAbs().maxCoeff(), 1e-6);
  const FitResult below = fit_robust(in.z0, in.z, 0.5 * threshold, LossMode::kL21);
  EXPECT_GT(below.model.a.cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_NEAR(objective(in.z0, in.z, r.model.a, lambda, LossMode::kL21), norm_l21(in.z0),
              1e-6 * norm_l21(in.z0));
}

class FitRobustOracle : public ::testing::TestWithParam<std::tuple<int, int, std::uint64_t>> {};

TEST_P(FitRobustOracle, MatchesSmoothedOracleAndBeatsRidge) {
  const auto [p, m, seed] = GetParam();
  const Instance in = noisy_instance(p, m, seed);
  const double lambda = 0.12;
  const FitResult r = fit_robust(in.z0, in.z, lambda, LossMode::kL21);
  EXPECT_TRUE(r.report.converged);
  const double alm = oracle::robust_objective(in.z0, in.z, r.model.a, lambda);

  const Matrix start =
      (in.z * in.z.transpose() + 1e-9 * Matrix::Identity(p, p)).ldlt().solve(in.z * in.z0.transpose()).transpose();
  const double reference = oracle::smoothed_minimize(in.z0, in.z, lambda, start).second;
  EXPECT_LE(alm, reference * (1.0 + 1e-4));
  EXPECT_LE(reference, alm * (1.0 + 1e-4));

  // The dual bound is a certified lower bound on the optimum.
  EXPECT_LE(r.report.duality_gap, 1e-4);

  if (m >= p) {
    const double ridge = oracle::robust_objective(in.z0, in.z, fit_ridge(in.z0, in.z, 0.0).a, lambda);
    EXPECT_LE(alm, ridge + 1e-7 * ridge);
  }
}

INSTANTIATE_TEST_SUITE_P(Tiny, FitRobustOracle,
                         ::testing::Values(std::tuple{5, 8, 100}, std::tuple{5, 8, 101},
                                           std::tuple{5, 8, 102}, std::tuple{4, 12, 103},
                                           std::tuple{8, 5, 104}, std::tuple{6, 3, 105}));

TEST(FitRobust, TraceInvariants) {
  const Instance in = noisy_instance(6, 15, 50);
  const SolverConfig config;
  const FitResult r = fit_robust(in.z0, in.z, 0.16, LossMode::kL21, config);
  ASSERT_EQ(static_cast<int>(r.report.trace.size()), r.report.iterations);
  ASSERT_TRUE(r.report.converged);
  int k = 0;
  for (std::size_t i = 0; i < r.report.trace.size(); ++i) {
    const IterationRecord& rec = r.report.trace[i];
    EXPECT_LE(rec.mu, config.mu_max);
    if (rec.pass == 0) {
      EXPECT_EQ(rec.mu, config.mu_at(k++));
    } else if (i > 0 && r.report.trace[i - 1].pass == rec.pass) {
      EXPECT_GE(rec.mu, r.report.trace[i - 1].mu);
    }
    EXPECT_TRUE(std::isfinite(rec.objective));
  }
  EXPECT_LE(r.report.trace.back().relative_af, config.tol);
  EXPECT_LE(r.report.trace.back().relative_data, config.tol);
}

TEST(FitRobust, SinglePassFollowsScheduleExactly) {
  const Instance in = noisy_instance(6, 15, 51);
  SolverConfig config;
  config.gap_tol = 0.0;
  const FitResult r = fit_robust(in.z0, in.z, 0.12, LossMode::kL21, config);
  EXPECT_EQ(r.report.passes, 1);
  for (int k = 0; k < r.report.iterations; ++k) {
    EXPECT_EQ(r.report.trace[k].mu, std::min(1e-6 * std::pow(1.2, k), 1e10));
  }
  EXPECT_TRUE(std::isnan(r.report.duality_gap));
}

TEST(FitRobust, Deterministic) {
  const Instance in = noisy_instance(7, 11, 60);
  const FitResult a = fit_robust(in.z0, in.z, 0.2, LossMode::kL21);
  const FitResult b = fit_robust(in.z0, in.z, 0.2, LossMode::kL21);
  EXPECT_EQ(a.model.a, b.model.a);
  ASSERT_EQ(a.report.trace.size(), b.report.trace.size());
  for (std::size_t i = 0; i < a.report.trace.size(); ++i) {
    EXPECT_EQ(a.report.trace[i].objective, b.report.trace[i].objective);
    EXPECT_EQ(a.report.trace[i].mu, b.report.trace[i].mu);
  }
}

TEST(FitRobust, NonConvergenceKeepsBestIterate) {
  const Instance in = noisy_instance(5, 8, 70);
  SolverConfig config;
  config.max_iter = 90;
  const FitResult r = fit_robust(in.z0, in.z, 0.12, LossMode::kL21, config);
  EXPECT_FALSE(r.report.converged);
  EXPECT_FALSE(r.model.converged);
  EXPECT_EQ(r.report.iterations, 90);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.report.trace) best = std::min(best, rec.objective);
  EXPECT_NEAR(objective(in.z0, in.z, r.model.a, 0.12, LossMode::kL21), best, 1e-10 * best);
}

TEST(FitRobust, FrobeniusModeReachesItsOptimum) {
  const Instance in = noisy_instance(5, 9, 80);
  const double lambda = 0.5;
  const FitResult r = fit_robust(in.z0, in.z, lambda, LossMode::kFrobenius);
  EXPECT_TRUE(r.report.converged);
  const double value = objective(in.z0, in.z, r.model.a, lambda, LossMode::kFrobenius);
  auto obj = [&](const Matrix& a) {
    return (in.z0 - a * in.z).squaredNorm() + lambda * oracle::nuclear_jacobi(a);
  };
  EXPECT_GE(oracle::best_perturbed(obj, r.model.a, 300, 81), value - 1e-6 * value);
  // With lambda = 0 the squared loss is plain least squares.
  const FitResult ls = fit_robust(in.z0, in.z, 0.0, LossMode::kFrobenius);
  EXPECT_LT((ls.model.a - fit_ridge(in.z0, in.z, 0.0).a).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(FitRobust, RejectsBadInput) {
  const Instance in = noisy_instance(3, 4, 1);
  EXPECT_THROW(fit_robust(in.z0, in.z, -0.1, LossMode::kL21), InvalidArgument);
  EXPECT_THROW(fit_robust(in.z0, in.z, 0.1, LossMode::kRidge), InvalidArgument);
  EXPECT_THROW(fit_robust(in.z0, Matrix::Zero(3, 5), 0.1, LossMode::kL21), InvalidArgument);
  SolverConfig bad;
  bad.rho = 0.5;
  EXPECT_THROW(fit_robust(in.z0, in.z, 0.1, LossMode::kL21, bad), InvalidArgument);
}

TEST(DualBound, NeverExceedsAnyPrimalValue) {
  for (int t = 0; t < 20; ++t) {
    const Instance in = noisy_instance(4, 6, 400 + t);
    const Matrix omega = oracle::random_matrix(4, 6, 500 + t);
    const Matrix a = oracle::random_matrix(4, 4, 600 + t, 0.3);
    const double lambda = 0.05 * (t % 5);
    for (LossMode loss : {LossMode::kL21, LossMode::kFrobenius}) {
      EXPECT_LE(dual_bound(in.z0, in.z, omega, lambda, loss),
                objective(in.z0, in.z, a, lambda, loss) + 1e-12);
    }
  }
}

TEST(Recover, IdentityAndLinearity) {
  CrtModel model;
  model.a = Matrix::Identity(4, 4);
  const Matrix x = oracle::random_matrix(4, 3, 1);
  EXPECT_EQ(recover(model, x), x);

  model.a = oracle::random_matrix(4, 4, 2);
  const Matrix y = oracle::random_matrix(4, 3, 3);
  const Matrix lhs = recover(model, 2.5 * x - 0.75 * y);
  const Matrix rhs = 2.5 * recover(model, x) - 0.75 * recover(model, y);
  EXPECT_LT((lhs - rhs).norm() / rhs.norm(), 1e-12);
  EXPECT_THROW(recover(model, Matrix::Zero(5, 1)), InvalidArgument);
}

TEST(Recover, RidgeSelfConsistency) {
  const Matrix z = oracle::random_matrix(5, 5, 9);
  const CrtModel model = fit_ridge(z, z, 0.0);
  EXPECT_LT((recover(model, z) - z).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Objective, Examples) {
  const Instance in = noisy_instance(3, 5, 11);
  EXPECT_DOUBLE_EQ(objective(in.z0, in.z, Matrix::Zero(3, 3), 0.3, LossMode::kL21), norm_l21(in.z0));
  const Matrix a = oracle::random_matrix(3, 3, 12);
  EXPECT_NEAR(objective(a * in.z, in.z, a, 0.3, LossMode::kL21), 0.3 * oracle::nuclear_jacobi(a), 1e-10);
  EXPECT_NEAR(objective(in.z0, in.z, a, 0.3, LossMode::kL21), oracle::robust_objective(in.z0, in.z, a, 0.3),
              1e-10);
  EXPECT_NEAR(objective(in.z0, in.z, a, 0.3, LossMode::kFrobenius),
              (in.z0 - a * in.z).squaredNorm() + 0.3 * oracle::nuclear_jacobi(a), 1e-10);
  EXPECT_NEAR(objective(in.z0, in.z, a, 0.3, LossMode::kRidge), (in.z0 - a * in.z).squaredNorm(), 1e-12);
}

TEST(LossMode, Names) {
  for (LossMode m : {LossMode::kL21, LossMode::kFrobenius, LossMode::kRidge}) {
    EXPECT_EQ(parse_loss_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_loss_mode("l1"), InvalidArgument);
}

TEST(ExportBasis, WritesRequestedCount) {
  TempDir dir;
  CrtModel model;
  model.a = oracle::random_matrix(36, 36, 3);
  export_basis(model, 6, 6, dir.path());
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    files += entry.path().extension() == ".pgm";
  }
  EXPECT_EQ(files, 32);
  EXPECT_TRUE(std::filesystem::exists(dir / "basis_000.pgm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "basis_031.pgm"));

  // Re-read column 0 against its own affine quantization.
  const PgmImage img = read_pgm(dir / "basis_000.pgm");
  const Vector col = model.a.col(0);
  const double lo = col.minCoeff(), span = col.maxCoeff() - lo;
  for (int i = 0; i < 36; ++i) EXPECT_NEAR(img.pixels[i] / 255.0, (col[i] - lo) / span, 1.0 / 255.0);
}

TEST(ExportBasis, IdentityGivesSingleBrightPixel) {
  TempDir dir;
  CrtModel model;
  model.a = Matrix::Identity(12, 12);
  export_basis(model, 3, 4, dir.path(), 1);
  const PgmImage img = read_pgm(dir / "basis_000.pgm");
  EXPECT_EQ(img.pixels[0], 255);
  for (int i = 1; i < 12; ++i) EXPECT_EQ(img.pixels[i], 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "basis_001.pgm"));
}

TEST(ExportBasis, GeometryMismatch) {
  TempDir dir;
  CrtModel model;
  model.a = Matrix::Identity(12, 12);
  EXPECT_THROW(export_basis(model, 3, 5, dir.path(), 1), InvalidArgument);
  EXPECT_THROW(export_basis(model, 3, 4, dir.path(), 13), InvalidArgument);
}

TEST(ModelFiles, SaveLoadRoundTrip) {
  TempDir dir;
  const Instance in = noisy_instance(4, 6, 13);
  const FitResult r = fit_robust(in.z0, in.z, 0.16, LossMode::kL21);
  save_model(r.model, dir / "model");
  const KeyValues meta = read_key_values(dir / "model" / "model.txt");
  for (const char* key : {"lambda", "loss_mode", "p", "iterations", "converged"}) {
    EXPECT_TRUE(meta.count(key)) << key;
  }
  const CrtModel back = load_model(dir / "model");
  EXPECT_EQ(back.a, r.model.a);
  EXPECT_EQ(back.lambda, 0.16);
  EXPECT_EQ(back.loss_mode, LossMode::kL21);
  EXPECT_EQ(back.iterations, r.model.iterations);
  EXPECT_EQ(back.converged, r.model.converged);
}

TEST(ModelFiles, TraceCsv) {
  TempDir dir;
  const Instance in = noisy_instance(4, 6, 14);
  const FitResult r = fit_robust(in.z0, in.z, 0.12, LossMode::kL21);
  write_trace_csv(r.report, dir / "trace.csv");
  std::ifstream file(dir / "trace.csv");
  std::string header;
  std::getline(file, header);
  EXPECT_EQ(header, "iteration,pass,mu,objective,primal_af,primal_data,relative_af,relative_data");
  int lines = 0;
  for (std::string line; std::getline(file, line);) ++lines;
  EXPECT_EQ(lines, r.report.iterations);
}

}  // namespace
}  // namespace crt
