#include "crt/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crt/classify.hpp"
#include "crt/corruption.hpp"
#include "crt/crt_solver.hpp"
#include "crt/error.hpp"
#include "crt/harness.hpp"
#include "crt/matrix_io.hpp"
#include "crt/rpca.hpp"

namespace crt {
namespace {

namespace fs = std::filesystem;

void add_solver_options(CLI::App* cmd, SolverConfig& cfg) {
  cmd->add_option("--mu0", cfg.mu0, "Initial penalty")->capture_default_str();
  cmd->add_option("--rho", cfg.rho, "Penalty growth factor")->capture_default_str();
  cmd->add_option("--mu-max", cfg.mu_max, "Penalty cap")->capture_default_str();
  cmd->add_option("--tol", cfg.tol, "Relative residual tolerance")->capture_default_str();
  cmd->add_option("--max-iter", cfg.max_iter, "Iteration limit")->capture_default_str();
}

void add_refinement_options(CLI::App* cmd, SolverConfig& cfg) {
  cmd->add_option("--gap-tol", cfg.gap_tol, "Relative duality gap for extra passes (0 disables)")
      ->capture_default_str();
  cmd->add_option("--max-passes", cfg.max_passes, "Penalty ramps allowed in total")->capture_default_str();
}

void write_dataset(const LabeledDataset& ds, const Matrix& data, const fs::path& dir,
                   const std::string& stem) {
  save_matrix(data, dir / (stem + ".crtm"), MatrixFormat::kBinary);
  DatasetManifest manifest;
  manifest.data_path = stem + ".crtm";
  manifest.labels_path = "labels.txt";
  manifest.height = ds.height;
  manifest.width = ds.width;
  manifest.value_min = 0.0;
  manifest.value_max = 1.0;
  manifest.write(dir / (stem + "_manifest.txt"));
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Corruption recovery transformation: learn one linear map that cleans corrupted images"};
  app.require_subcommand(1);

  // corrupt
  std::string manifest_path, kind = "block", fill, out_dir;
  double fraction = 0.10;
  std::uint64_t seed = 0;
  auto* corrupt = app.add_subcommand("corrupt", "Apply seeded synthetic corruption to a dataset");
  corrupt->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  corrupt->add_option("--kind", kind, "block | cross | saltpepper")->capture_default_str();
  corrupt->add_option("--fraction", fraction, "Corrupted share of each image")->capture_default_str();
  corrupt->add_option("--seed", seed, "RNG seed")->capture_default_str();
  corrupt->add_option("--fill", fill, "zeros | max | random_binary (default depends on kind)");
  corrupt->add_option("--out", out_dir, "Output directory")->required();

  // rpca
  double rpca_lambda = 0.0;
  bool per_class = false;
  SolverConfig rpca_cfg;
  auto* rpca = app.add_subcommand("rpca", "Low-rank plus sparse split of a dataset");
  rpca->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  rpca->add_option("--lambda", rpca_lambda, "Sparse-term weight (<= 0: 1/sqrt(max(p, n)))")
      ->capture_default_str();
  rpca->add_flag("--per-class", per_class, "Decompose each class separately");
  add_solver_options(rpca, rpca_cfg);
  add_refinement_options(rpca, rpca_cfg);
  rpca->add_option("--out", out_dir, "Output directory")->required();

  // train
  std::string clean_path, noisy_path, loss = "l21";
  double lambda = 0.12, epsilon = 0.0;
  SolverConfig train_cfg;
  auto* train = app.add_subcommand("train", "Learn the transformation from clean/noisy pairs");
  train->add_option("--clean", clean_path, "Clean training matrix Z0 (p x m)")->required();
  train->add_option("--noisy", noisy_path, "Noisy training matrix Z (p x m)")->required();
  train->add_option("--lambda", lambda, "Nuclear-norm weight")->capture_default_str();
  train->add_option("--loss", loss, "l21 | frobenius | ridge")->capture_default_str();
  train->add_option("--epsilon", epsilon, "Diagonal jitter for ridge")->capture_default_str();
  add_solver_options(train, train_cfg);
  add_refinement_options(train, train_cfg);
  train->add_option("--out", out_dir, "Model directory")->required();

  // recover
  std::string model_dir, in_path, out_path;
  auto* recover_cmd = app.add_subcommand("recover", "Apply a learned transformation");
  recover_cmd->add_option("--model", model_dir, "Model directory")->required();
  recover_cmd->add_option("--in", in_path, "Input matrix (p x n)")->required();
  recover_cmd->add_option("--out", out_path, "Output matrix")->required();

  // classify
  std::string train_path, labels_path, query_path, truth_path;
  int knn_k = 1;
  double src_gamma = 0.0;
  auto* classify = app.add_subcommand("classify", "Classify queries by KNN or SRC");
  classify->add_option("--model", model_dir, "Transform queries through this model first");
  classify->add_option("--train", train_path, "Reference matrix (p x n)")->required();
  classify->add_option("--labels", labels_path, "Reference labels")->required();
  classify->add_option("--query", query_path, "Query matrix (p x q)")->required();
  auto* knn_opt = classify->add_option("--knn", knn_k, "K for nearest neighbours");
  auto* src_opt = classify->add_option("--src", src_gamma, "SRC l1 weight (<= 0: default)");
  knn_opt->excludes(src_opt);
  classify->add_option("--truth", truth_path, "Query labels; prints accuracy");
  classify->add_option("--out", out_path, "Write predictions here instead of stdout");

  // eval
  std::string config_path;
  auto* eval = app.add_subcommand("eval", "Cross-validated experiment from a config file");
  eval->add_option("--config", config_path, "Experiment config (key=value)")->required();

  // basis
  int height = 0, width = 0, count = 32;
  auto* basis = app.add_subcommand("basis", "Render transformation columns as PGM images");
  basis->add_option("--model", model_dir, "Model directory")->required();
  basis->add_option("--height", height, "Image height")->required();
  basis->add_option("--width", width, "Image width")->required();
  basis->add_option("--count", count, "Number of columns")->capture_default_str();
  basis->add_option("--out", out_dir, "Output directory")->required();

  // synth
  TemplateDatasetOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Write a synthetic rank-one template dataset");
  synth->add_option("--classes", synth_opts.classes)->capture_default_str();
  synth->add_option("--per-class", synth_opts.per_class)->capture_default_str();
  synth->add_option("--height", synth_opts.height)->capture_default_str();
  synth->add_option("--width", synth_opts.width)->capture_default_str();
  synth->add_option("--noise", synth_opts.noise)->capture_default_str();
  synth->add_option("--separation", synth_opts.separation)->capture_default_str();
  synth->add_option("--seed", synth_opts.seed)->capture_default_str();
  synth->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*corrupt) {
      const LabeledDataset ds = load_dataset(DatasetManifest::read(manifest_path));
      const NoiseKind noise = parse_noise_kind(kind);
      const CorruptionSpec spec{noise, fraction, seed,
                                fill.empty() ? default_fill(noise) : parse_fill_rule(fill)};
      const CorruptedDataset out = apply_corruption(ds, spec);
      fs::create_directories(out_dir);
      Matrix masks(ds.data.rows(), ds.data.cols());
      for (Eigen::Index j = 0; j < masks.cols(); ++j) {
        for (Eigen::Index i = 0; i < masks.rows(); ++i) masks(i, j) = out.masks[j].pixels[i] ? 1.0 : 0.0;
      }
      save_labels(ds.labels, fs::path(out_dir) / "labels.txt");
      write_dataset(ds, out.data.data, out_dir, "corrupted");
      write_dataset(ds, ds.data, out_dir, "clean");
      save_matrix(masks, fs::path(out_dir) / "mask.crtm", MatrixFormat::kBinary);
    } else if (*rpca) {
      const LabeledDataset ds = load_dataset(DatasetManifest::read(manifest_path));
      fs::create_directories(out_dir);
      Matrix low_rank;
      if (per_class) {
        low_rank = synthesize_ground_truth(ds, rpca_lambda, rpca_cfg, true);
      } else {
        const double lam = rpca_lambda > 0.0 ? rpca_lambda
                                             : rpca_default_lambda(static_cast<int>(ds.data.rows()),
                                                                   static_cast<int>(ds.data.cols()));
        RpcaResult res = rpca_decompose(ds.data, lam, rpca_cfg);
        write_trace_csv(res.report, fs::path(out_dir) / "trace.csv");
        if (!res.report.converged) std::cerr << "warning: RPCA did not converge\n";
        low_rank = std::move(res.low_rank);
      }
      save_labels(ds.labels, fs::path(out_dir) / "labels.txt");
      write_dataset(ds, low_rank, out_dir, "low_rank");
      save_matrix(ds.data - low_rank, fs::path(out_dir) / "sparse.crtm", MatrixFormat::kBinary);
    } else if (*train) {
      const Matrix z0 = load_matrix(clean_path);
      const Matrix z = load_matrix(noisy_path);
      const LossMode mode = parse_loss_mode(loss);
      if (mode == LossMode::kRidge) {
        save_model(fit_ridge(z0, z, epsilon), out_dir);
        std::cout << "ridge transformation p=" << z.rows() << "\n";
      } else {
        const FitResult fit = fit_robust(z0, z, lambda, mode, train_cfg);
        save_model(fit.model, out_dir);
        write_trace_csv(fit.report, fs::path(out_dir) / "trace.csv");
        std::cout << "iterations=" << fit.report.iterations << " passes=" << fit.report.passes
                  << " converged=" << (fit.report.converged ? "true" : "false")
                  << " objective=" << format_number(objective(z0, z, fit.model.a, lambda, mode))
                  << "\n";
        if (!fit.report.converged) std::cerr << "warning: ALM did not converge; kept best iterate\n";
      }
    } else if (*recover_cmd) {
      const CrtModel model = load_model(model_dir);
      save_matrix(recover(model, load_matrix(in_path)), out_path);
    } else if (*classify) {
      const Matrix reference = load_matrix(train_path);
      const std::vector<int> labels = load_labels(labels_path);
      Matrix queries = load_matrix(query_path);
      if (!model_dir.empty()) queries = recover(load_model(model_dir), queries);
      ClassifierSpec spec;
      if (src_opt->count() > 0) {
        spec.kind = ClassifierSpec::Kind::kSrc;
        spec.gamma = src_gamma;
      } else {
        spec.k = knn_k;
      }
      std::vector<int> predicted;
      if (spec.kind == ClassifierSpec::Kind::kKnn) {
        predicted = knn_classify_batch(reference, labels, queries, spec.k);
      } else {
        const Matrix dict = normalize_columns(reference);
        for (Eigen::Index q = 0; q < queries.cols(); ++q) {
          const Vector y = queries.col(q);
          predicted.push_back(src_identity(dict, labels, y, src_fit(dict, y, spec.gamma).coefficients).predicted);
        }
      }
      if (out_path.empty()) {
        for (int c : predicted) std::cout << c << '\n';
      } else {
        save_labels(predicted, out_path);
      }
      if (!truth_path.empty()) {
        const std::vector<int> truth = load_labels(truth_path);
        if (truth.size() != predicted.size()) throw InvalidArgument("truth label count mismatch");
        std::size_t hits = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
        std::cerr << "accuracy=" << format_number(static_cast<double>(hits) / truth.size()) << '\n';
      }
    } else if (*eval) {
      const ExperimentConfig cfg = ExperimentConfig::read(config_path);
      const MetricsTable table = run_cv(cfg);
      for (const auto& r : table.mean_rows()) {
        std::cout << r.pipeline << (r.param.empty() ? "" : "(" + r.param + ")") << ' '
                  << r.classifier << " accuracy=" << format_number(r.accuracy)
                  << " psnr=" << format_number(r.psnr) << '\n';
      }
    } else if (*basis) {
      export_basis(load_model(model_dir), height, width, out_dir, count);
    } else if (*synth) {
      const LabeledDataset ds = make_template_dataset(synth_opts);
      fs::create_directories(out_dir);
      save_labels(ds.labels, fs::path(out_dir) / "labels.txt");
      write_dataset(ds, ds.data, out_dir, "data");
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace crt
