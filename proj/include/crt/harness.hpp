#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crt/corruption.hpp"
#include "crt/crt_solver.hpp"
#include "crt/matrix_io.hpp"

namespace crt {

struct PipelineSpec {
  enum class Kind { kRaw, kPca, kCrt };
  Kind kind = Kind::kRaw;
  int pca_dim = 50;
  double lambda = 0.12;

  std::string name() const;   // raw | pca | crt
  std::string param() const;  // "" | d | lambda
  // "raw", "pca:50", "crt:0.12"
  static PipelineSpec parse(const std::string& text);
};

struct ClassifierSpec {
  enum class Kind { kKnn, kSrc };
  Kind kind = Kind::kKnn;
  int k = 1;
  double gamma = 0.0;  // <= 0: per-query default

  std::string name() const;  // knn1 | knn3 | src
  // "knn:1", "knn:3", "src", "src:0.01"
  static ClassifierSpec parse(const std::string& text);
};

enum class GroundTruthSource { kRpca, kClean };

struct ExperimentSettings {
  std::optional<CorruptionSpec> corruption;
  std::vector<PipelineSpec> pipelines{PipelineSpec{}};
  std::vector<ClassifierSpec> classifiers{ClassifierSpec{}};
  LossMode loss = LossMode::kL21;
  int folds = 5;
  std::uint64_t seed = 0;
  GroundTruthSource ground_truth = GroundTruthSource::kRpca;
  double rpca_lambda = 0.0;  // <= 0: default
  bool rpca_per_class = false;
  // Compare recovered queries against A * Z instead of Z0.
  bool reference_through_transform = false;
  SolverConfig solver;

  void validate() const;
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  ExperimentSettings settings;

  static ExperimentConfig read(const std::filesystem::path& path);
};

struct MetricsRow {
  std::string pipeline;
  std::string classifier;
  std::string param;
  int fold = 0;
  double accuracy = 0.0;
  double psnr = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> fold_rows;  // sorted by (pipeline, param, classifier, fold)

  // One row per (pipeline, classifier, param) with fold = -1.
  std::vector<MetricsRow> mean_rows() const;
  double mean_accuracy(const std::string& pipeline, const std::string& classifier,
                       const std::string& param) const;
  double mean_psnr(const std::string& pipeline, const std::string& classifier,
                   const std::string& param) const;
  // Header pipeline,classifier,param,fold,accuracy,psnr; mean rows use fold "mean".
  void write_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
};

// Fold id per column. Columns are shuffled within each class, ordered by
// class, and dealt round-robin, so fold sizes differ by at most one and each
// fold keeps the class proportions.
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

// 10 log10(1 / MSE) for signals in [0, 1], capped at 100 dB.
double psnr(const Vector& x, const Vector& ref);
double mean_psnr(const Matrix& x, const Matrix& ref);

// Five-fold (by default) evaluation of every pipeline x classifier pair on
// `clean`. When settings.corruption is set, all images are corrupted before
// splitting and PSNR is measured against the uncorrupted images.
MetricsTable run_cv(const LabeledDataset& clean, const ExperimentSettings& settings);

// Loads the manifest, runs run_cv and writes <output_dir>/metrics.csv.
MetricsTable run_cv(const ExperimentConfig& config);

// Synthetic images with a rank-one template per class plus Gaussian noise,
// clamped to [0, 1]. See the definition for the template construction.
struct TemplateDatasetOptions {
  int classes = 3;
  int per_class = 20;
  int height = 16;
  int width = 16;
  double noise = 0.02;
  // Weight of the class-specific profile against a profile shared by all
  // classes; 1 gives unrelated templates, 0 gives identical ones.
  double separation = 0.2;
  std::uint64_t seed = 0;
};

LabeledDataset make_template_dataset(const TemplateDatasetOptions& options);

}  // namespace crt
