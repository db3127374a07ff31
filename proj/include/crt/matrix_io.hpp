#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace crt {

// Columns are samples: a p x n matrix holds n vectorized images of length
// p = height * width. Images are vectorized row-major, so pixel (r, c) sits at
// index r * width + c, matching the byte order of PGM rasters.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class MatrixFormat { kBinary, kCsv };

// ".csv" selects CSV, anything else the CRTM binary format.
MatrixFormat format_for_path(const std::filesystem::path& path);

// CRTM layout: magic "CRTM", rows and cols as little-endian uint32, then
// rows * cols little-endian float64 values in column-major order.
Matrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
Matrix load_matrix(const std::filesystem::path& path);
void save_matrix(const Matrix& m, const std::filesystem::path& path, MatrixFormat format);
void save_matrix(const Matrix& m, const std::filesystem::path& path);

struct LabeledDataset {
  Matrix data;              // p x n
  std::vector<int> labels;  // one class id per column, contiguous from 0
  int height = 0;
  int width = 0;

  int num_classes() const;
  // Throws ParseError when geometry or labels break the dataset invariants.
  void validate() const;
  // Column subset, preserving order of `columns`.
  LabeledDataset subset(const std::vector<int>& columns) const;
};

struct DatasetManifest {
  std::filesystem::path data_path;
  std::filesystem::path labels_path;
  int height = 0;
  int width = 0;
  double value_min = 0.0;
  double value_max = 255.0;

  // Relative paths inside the manifest resolve against its directory.
  static DatasetManifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

// Reads the data matrix and labels and rescales pixels from
// [value_min, value_max] to [0, 1].
LabeledDataset load_dataset(const DatasetManifest& manifest);

std::vector<int> load_labels(const std::filesystem::path& path);
void save_labels(const std::vector<int>& labels, const std::filesystem::path& path);

// Binary PGM (P5, maxval 255). min(v) maps to 0 and max(v) to 255 with
// round-half-up; a constant vector renders as uniform 128.
void export_image_pgm(const Vector& v, int height, int width, const std::filesystem::path& path);

struct PgmImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

PgmImage read_pgm(const std::filesystem::path& path);

// key=value text files with '#' comments; used by manifests, experiment
// configs and model metadata.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const KeyValues& values, const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

}  // namespace crt
