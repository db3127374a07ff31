#include "crt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

#include "crt/classify.hpp"
#include "crt/error.hpp"
#include "crt/rpca.hpp"

namespace crt {
namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(" \t");
    items.push_back(item.substr(first, last - first + 1));
  }
  return items;
}

double to_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError("invalid number '" + text + "' for " + what);
  }
}

long long to_integer(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError("invalid integer '" + text + "' for " + what);
  }
}

bool to_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError("invalid boolean '" + text + "' for " + what);
}

double accuracy_of(const std::vector<int>& predicted, const std::vector<int>& truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
}

Matrix columns_of(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

std::vector<int> classify_all(const ClassifierSpec& spec, const Matrix& reference,
                              const std::vector<int>& labels, const Matrix& queries) {
  if (spec.kind == ClassifierSpec::Kind::kKnn) {
    return knn_classify_batch(reference, labels, queries, spec.k);
  }
  const Matrix dict = normalize_columns(reference);
  std::vector<int> out(static_cast<std::size_t>(queries.cols()));
  for (Eigen::Index q = 0; q < queries.cols(); ++q) {
    const Vector y = queries.col(q);
    const SrcFit fit = src_fit(dict, y, spec.gamma, 5000);
    out[q] = src_identity(dict, labels, y, fit.coefficients).predicted;
  }
  return out;
}

struct Representation {
  Matrix reference;
  Matrix queries;
  double psnr = 0.0;
};

std::vector<MetricsRow> evaluate_fold(int fold, const std::vector<int>& train_idx,
                                      const std::vector<int>& test_idx, const LabeledDataset& clean,
                                      const Matrix& noisy, const ExperimentSettings& settings) {
  const Matrix z = columns_of(noisy, train_idx);
  const Matrix x = columns_of(noisy, test_idx);
  const Matrix x_clean = columns_of(clean.data, test_idx);
  std::vector<int> train_labels, test_labels;
  for (int i : train_idx) train_labels.push_back(clean.labels[i]);
  for (int i : test_idx) test_labels.push_back(clean.labels[i]);

  Matrix z0;
  auto ground_truth = [&]() -> const Matrix& {
    if (z0.size() == 0) {
      if (settings.ground_truth == GroundTruthSource::kClean) {
        z0 = columns_of(clean.data, train_idx);
      } else {
        LabeledDataset train{z, train_labels, clean.height, clean.width};
        // Class ids inside a fold stay contiguous because folds are stratified;
        // per-class RPCA needs that, the global split does not.
        z0 = synthesize_ground_truth(train, settings.rpca_lambda, settings.solver,
                                     settings.rpca_per_class);
      }
    }
    return z0;
  };

  std::vector<MetricsRow> rows;
  for (const PipelineSpec& pipeline : settings.pipelines) {
    Representation rep;
    switch (pipeline.kind) {
      case PipelineSpec::Kind::kRaw:
        rep.reference = z;
        rep.queries = x;
        rep.psnr = mean_psnr(x, x_clean);
        break;
      case PipelineSpec::Kind::kPca: {
        const PcaModel pca = pca_fit(z, pipeline.pca_dim);
        rep.reference = pca_project(pca, z);
        rep.queries = pca_project(pca, x);
        rep.psnr = mean_psnr(pca_reconstruct(pca, rep.queries), x_clean);
        break;
      }
      case PipelineSpec::Kind::kCrt: {
        const Matrix& target = ground_truth();
        const FitResult fit = fit_robust(target, z, pipeline.lambda, settings.loss, settings.solver);
        rep.queries = recover(fit.model, x);
        rep.reference = settings.reference_through_transform ? recover(fit.model, z) : target;
        rep.psnr = mean_psnr(rep.queries, x_clean);
        break;
      }
    }
    for (const ClassifierSpec& classifier : settings.classifiers) {
      const auto predicted = classify_all(classifier, rep.reference, train_labels, rep.queries);
      rows.push_back({pipeline.name(), classifier.name(), pipeline.param(), fold,
                      accuracy_of(predicted, test_labels), rep.psnr});
    }
  }
  return rows;
}

auto row_key(const MetricsRow& r) { return std::tie(r.pipeline, r.param, r.classifier); }

}  // namespace

std::string PipelineSpec::name() const {
  switch (kind) {
    case Kind::kRaw: return "raw";
    case Kind::kPca: return "pca";
    case Kind::kCrt: return "crt";
  }
  return "raw";
}

std::string PipelineSpec::param() const {
  switch (kind) {
    case Kind::kRaw: return "";
    case Kind::kPca: return std::to_string(pca_dim);
    case Kind::kCrt: return format_number(lambda);
  }
  return "";
}

PipelineSpec PipelineSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  PipelineSpec spec;
  if (head == "raw" && arg.empty()) {
    spec.kind = Kind::kRaw;
  } else if (head == "pca" && !arg.empty()) {
    spec.kind = Kind::kPca;
    spec.pca_dim = static_cast<int>(to_integer(arg, "pca dimension"));
    if (spec.pca_dim < 1) throw ParseError("pca dimension must be positive");
  } else if (head == "crt" && !arg.empty()) {
    spec.kind = Kind::kCrt;
    spec.lambda = to_double(arg, "crt lambda");
    if (!(spec.lambda >= 0.0)) throw ParseError("crt lambda must be nonnegative");
  } else {
    throw ParseError("unknown pipeline '" + text + "' (expected raw, pca:D or crt:LAMBDA)");
  }
  return spec;
}

std::string ClassifierSpec::name() const {
  return kind == Kind::kKnn ? "knn" + std::to_string(k) : "src";
}

ClassifierSpec ClassifierSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  ClassifierSpec spec;
  if (head == "knn" && !arg.empty()) {
    spec.kind = Kind::kKnn;
    spec.k = static_cast<int>(to_integer(arg, "knn k"));
    if (spec.k < 1) throw ParseError("knn k must be positive");
  } else if (head == "src") {
    spec.kind = Kind::kSrc;
    spec.gamma = arg.empty() ? 0.0 : to_double(arg, "src gamma");
  } else {
    throw ParseError("unknown classifier '" + text + "' (expected knn:K or src[:GAMMA])");
  }
  return spec;
}

void ExperimentSettings::validate() const {
  if (folds < 2) throw InvalidArgument("folds must be at least 2");
  if (pipelines.empty()) throw InvalidArgument("no pipelines configured");
  if (classifiers.empty()) throw InvalidArgument("no classifiers configured");
  if (loss == LossMode::kRidge) throw InvalidArgument("the CRT pipeline needs l21 or frobenius loss");
  if (corruption) corruption->validate();
  solver.validate();
}

ExperimentConfig ExperimentConfig::read(const std::filesystem::path& path) {
  const KeyValues kv = read_key_values(path);
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  ExperimentConfig cfg;
  ExperimentSettings& s = cfg.settings;
  std::string corruption_kind = "none";
  double fraction = 0.10;
  std::optional<FillRule> fill;
  std::optional<std::uint64_t> corruption_seed;

  for (const auto& [key, value] : kv) {
    if (key == "manifest") cfg.manifest = resolve(value);
    else if (key == "output_dir") cfg.output_dir = resolve(value);
    else if (key == "corruption") corruption_kind = value;
    else if (key == "fraction") fraction = to_double(value, key);
    else if (key == "fill") fill = parse_fill_rule(value);
    else if (key == "corruption_seed") corruption_seed = static_cast<std::uint64_t>(to_integer(value, key));
    else if (key == "pipelines") {
      s.pipelines.clear();
      for (const auto& item : split_list(value)) s.pipelines.push_back(PipelineSpec::parse(item));
    } else if (key == "classifiers") {
      s.classifiers.clear();
      for (const auto& item : split_list(value)) s.classifiers.push_back(ClassifierSpec::parse(item));
    } else if (key == "loss") s.loss = parse_loss_mode(value);
    else if (key == "folds") s.folds = static_cast<int>(to_integer(value, key));
    else if (key == "seed") s.seed = static_cast<std::uint64_t>(to_integer(value, key));
    else if (key == "ground_truth") {
      if (value == "rpca") s.ground_truth = GroundTruthSource::kRpca;
      else if (value == "clean") s.ground_truth = GroundTruthSource::kClean;
      else throw ParseError("ground_truth must be rpca or clean");
    } else if (key == "rpca_lambda") s.rpca_lambda = to_double(value, key);
    else if (key == "rpca_per_class") s.rpca_per_class = to_bool(value, key);
    else if (key == "reference") {
      if (value == "z0") s.reference_through_transform = false;
      else if (value == "transformed") s.reference_through_transform = true;
      else throw ParseError("reference must be z0 or transformed");
    } else if (key == "mu0") s.solver.mu0 = to_double(value, key);
    else if (key == "rho") s.solver.rho = to_double(value, key);
    else if (key == "mu_max") s.solver.mu_max = to_double(value, key);
    else if (key == "tol") s.solver.tol = to_double(value, key);
    else if (key == "max_iter") s.solver.max_iter = static_cast<int>(to_integer(value, key));
    else if (key == "gap_tol") s.solver.gap_tol = to_double(value, key);
    else if (key == "max_passes") s.solver.max_passes = static_cast<int>(to_integer(value, key));
    else throw ParseError(path.string() + ": unknown key '" + key + "'");
  }
  if (cfg.manifest.empty()) throw ParseError(path.string() + ": missing key 'manifest'");
  if (cfg.output_dir.empty()) throw ParseError(path.string() + ": missing key 'output_dir'");
  if (corruption_kind != "none") {
    const NoiseKind kind = parse_noise_kind(corruption_kind);
    s.corruption = CorruptionSpec{kind, fraction, corruption_seed.value_or(s.seed),
                                  fill.value_or(default_fill(kind))};
  }
  s.validate();
  return cfg;
}

std::vector<MetricsRow> MetricsTable::mean_rows() const {
  std::vector<MetricsRow> out;
  for (std::size_t i = 0; i < fold_rows.size();) {
    std::size_t j = i;
    MetricsRow mean = fold_rows[i];
    mean.fold = -1;
    mean.accuracy = 0.0;
    mean.psnr = 0.0;
    while (j < fold_rows.size() && row_key(fold_rows[j]) == row_key(fold_rows[i])) {
      mean.accuracy += fold_rows[j].accuracy;
      mean.psnr += fold_rows[j].psnr;
      ++j;
    }
    mean.accuracy /= static_cast<double>(j - i);
    mean.psnr /= static_cast<double>(j - i);
    out.push_back(mean);
    i = j;
  }
  return out;
}

double MetricsTable::mean_accuracy(const std::string& pipeline, const std::string& classifier,
                                   const std::string& param) const {
  for (const auto& r : mean_rows()) {
    if (r.pipeline == pipeline && r.classifier == classifier && r.param == param) return r.accuracy;
  }
  throw InvalidArgument("no metrics for " + pipeline + "/" + classifier + "/" + param);
}

double MetricsTable::mean_psnr(const std::string& pipeline, const std::string& classifier,
                               const std::string& param) const {
  for (const auto& r : mean_rows()) {
    if (r.pipeline == pipeline && r.classifier == classifier && r.param == param) return r.psnr;
  }
  throw InvalidArgument("no metrics for " + pipeline + "/" + classifier + "/" + param);
}

std::string MetricsTable::to_csv() const {
  std::ostringstream out;
  out << "pipeline,classifier,param,fold,accuracy,psnr\n";
  auto emit = [&](const MetricsRow& r) {
    out << r.pipeline << ',' << r.classifier << ',' << r.param << ','
        << (r.fold < 0 ? std::string("mean") : std::to_string(r.fold)) << ','
        << format_number(r.accuracy) << ',' << format_number(r.psnr) << '\n';
  };
  for (const auto& r : fold_rows) emit(r);
  for (const auto& r : mean_rows()) emit(r);
  return out.str();
}

void MetricsTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("folds must be at least 2");
  if (static_cast<int>(labels.size()) < folds) {
    throw InvalidArgument("dataset too small for " + std::to_string(folds) + " stratified folds");
  }
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

  std::mt19937_64 rng(seed);
  std::vector<int> fold_of(labels.size(), 0);
  std::size_t position = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (int idx : members) fold_of[idx] = static_cast<int>(position++ % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

double psnr(const Vector& x, const Vector& ref) {
  if (x.size() != ref.size() || x.size() == 0) throw InvalidArgument("PSNR length mismatch");
  const double mse = (x - ref).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double mean_psnr(const Matrix& x, const Matrix& ref) {
  if (x.rows() != ref.rows() || x.cols() != ref.cols() || x.cols() == 0) {
    throw InvalidArgument("PSNR shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) total += psnr(x.col(j), ref.col(j));
  return total / static_cast<double>(x.cols());
}

MetricsTable run_cv(const LabeledDataset& clean, const ExperimentSettings& settings) {
  settings.validate();
  clean.validate();
  const Matrix noisy =
      settings.corruption ? apply_corruption(clean, *settings.corruption).data.data : clean.data;
  const std::vector<int> fold_of = stratified_folds(clean.labels, settings.folds, settings.seed);

  std::vector<std::vector<MetricsRow>> per_fold(static_cast<std::size_t>(settings.folds));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(settings.folds));
#pragma omp parallel for schedule(dynamic)
  for (int fold = 0; fold < settings.folds; ++fold) {
    try {
      std::vector<int> train_idx, test_idx;
      for (std::size_t i = 0; i < fold_of.size(); ++i) {
        (fold_of[i] == fold ? test_idx : train_idx).push_back(static_cast<int>(i));
      }
      per_fold[fold] = evaluate_fold(fold, train_idx, test_idx, clean, noisy, settings);
    } catch (...) {
      errors[fold] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MetricsTable table;
  for (auto& rows : per_fold) table.fold_rows.insert(table.fold_rows.end(), rows.begin(), rows.end());
  std::stable_sort(table.fold_rows.begin(), table.fold_rows.end(),
                   [](const MetricsRow& a, const MetricsRow& b) {
                     return std::tie(a.pipeline, a.param, a.classifier, a.fold) <
                            std::tie(b.pipeline, b.param, b.classifier, b.fold);
                   });
  return table;
}

MetricsTable run_cv(const ExperimentConfig& config) {
  const LabeledDataset data = load_dataset(DatasetManifest::read(config.manifest));
  MetricsTable table = run_cv(data, config.settings);
  std::filesystem::create_directories(config.output_dir);
  table.write_csv(config.output_dir / "metrics.csv");
  return table;
}

// Class c uses the template u_c v_c^T, where each profile is a sinusoid
// 0.5 + 0.35 sin(2 pi a (t + 0.5) / len + phi) with frequency a in [0.5, 1.5]
// and phase phi drawn per class and per axis, blended as
// (1 - separation) * shared + separation * own with a shared pair drawn first.
// Samples add N(0, noise^2) per pixel and clamp to [0, 1]. Columns are
// ordered class by class.
LabeledDataset make_template_dataset(const TemplateDatasetOptions& options) {
  if (options.classes < 1 || options.per_class < 1 || options.height < 1 || options.width < 1) {
    throw InvalidArgument("template dataset sizes must be positive");
  }
  if (!(options.separation >= 0.0 && options.separation <= 1.0)) {
    throw InvalidArgument("separation must lie in [0, 1]");
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> freq(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, options.noise);

  auto profile = [&](int len) {
    const double a = freq(rng);
    const double phi = phase(rng);
    Vector v(len);
    for (int t = 0; t < len; ++t) {
      v[t] = 0.5 + 0.35 * std::sin(2.0 * std::numbers::pi * a * (t + 0.5) / len + phi);
    }
    return v;
  };

  const Vector shared_u = profile(options.height);
  const Vector shared_v = profile(options.width);
  const double s_own = options.separation;
  const int p = options.height * options.width;
  LabeledDataset ds;
  ds.height = options.height;
  ds.width = options.width;
  ds.data.resize(p, static_cast<Eigen::Index>(options.classes) * options.per_class);
  Eigen::Index col = 0;
  for (int c = 0; c < options.classes; ++c) {
    const Vector u = (1.0 - s_own) * shared_u + s_own * profile(options.height);
    const Vector v = (1.0 - s_own) * shared_v + s_own * profile(options.width);
    for (int s = 0; s < options.per_class; ++s, ++col) {
      for (int r = 0; r < options.height; ++r) {
        for (int w = 0; w < options.width; ++w) {
          ds.data(r * options.width + w, col) = std::clamp(u[r] * v[w] + gauss(rng), 0.0, 1.0);
        }
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace crt
