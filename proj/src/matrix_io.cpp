#include "crt/matrix_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include "crt/error.hpp"

namespace crt {
namespace {

constexpr std::array<char, 4> kMagic{'C', 'R', 'T', 'M'};

static_assert(std::endian::native == std::endian::little,
              "CRTM I/O assumes a little-endian host");

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(std::string_view text, std::size_t row, std::size_t col) {
  const std::string cell = trim(text);
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("unparseable value '" + cell + "' at row " + std::to_string(row) +
                     ", column " + std::to_string(col));
  }
  if (!std::isfinite(value)) {
    throw ParseError("non-finite value at row " + std::to_string(row) + ", column " +
                     std::to_string(col));
  }
  return value;
}

void check_writable(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw IoError("cannot write " + path.string());
}

Matrix load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || magic != kMagic) throw ParseError("malformed header in " + path.string());
  if (rows == 0 || cols == 0) throw ParseError("zero dimension in " + path.string());

  const std::uint64_t count = std::uint64_t{rows} * cols;
  const auto header_bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::end);
  const auto total_bytes = static_cast<std::uint64_t>(in.tellg());
  if (total_bytes - header_bytes != count * sizeof(double)) {
    throw ParseError("dimension mismatch: header declares " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " but payload holds " +
                     std::to_string((total_bytes - header_bytes) / sizeof(double)) + " values");
  }
  in.seekg(static_cast<std::streamoff>(header_bytes));

  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ParseError("truncated payload in " + path.string());
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!std::isfinite(m.data()[i])) {
      throw ParseError("non-finite value at index " + std::to_string(i) + " (row " +
                       std::to_string(i % rows) + ", column " + std::to_string(i / rows) + ")");
    }
  }
  return m;
}

Matrix load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> values;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto cell = std::string_view(line).substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      values.push_back(parse_double(cell, rows.size(), values.size()));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw ParseError("dimension mismatch: row " + std::to_string(rows.size()) + " has " +
                       std::to_string(values.size()) + " values, expected " +
                       std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError("zero dimension: empty CSV " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

MatrixFormat format_for_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? MatrixFormat::kCsv : MatrixFormat::kBinary;
}

Matrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  return format == MatrixFormat::kCsv ? load_csv(path) : load_binary(path);
}

Matrix load_matrix(const std::filesystem::path& path) {
  return load_matrix(path, format_for_path(path));
}

void save_matrix(const Matrix& m, const std::filesystem::path& path, MatrixFormat format) {
  if (m.rows() == 0 || m.cols() == 0) throw InvalidArgument("zero dimension rejected");
  if (!m.allFinite()) throw InvalidArgument("non-finite values cannot be saved");
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("matrix too large for CRTM");
  }

  if (format == MatrixFormat::kCsv) {
    std::ofstream out(path);
    check_writable(out, path);
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j > 0) out.put(',');
        // Shortest representation that round-trips exactly.
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, m(i, j));
        out.write(buf, ptr - buf);
      }
      out.put('\n');
    }
    check_writable(out, path);
    return;
  }

  std::ofstream out(path, std::ios::binary);
  check_writable(out, path);
  const auto rows = static_cast<std::uint32_t>(m.rows());
  const auto cols = static_cast<std::uint32_t>(m.cols());
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  check_writable(out, path);
}

void save_matrix(const Matrix& m, const std::filesystem::path& path) {
  save_matrix(m, path, format_for_path(path));
}

int LabeledDataset::num_classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void LabeledDataset::validate() const {
  if (height <= 0 || width <= 0) throw ParseError("image geometry must be positive");
  if (static_cast<Eigen::Index>(height) * width != data.rows()) {
    throw ParseError("dimension mismatch: " + std::to_string(height) + "x" +
                     std::to_string(width) + " geometry vs " + std::to_string(data.rows()) +
                     " rows");
  }
  if (static_cast<Eigen::Index>(labels.size()) != data.cols()) {
    throw ParseError("label count mismatch: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(data.cols()) + " samples");
  }
  const std::set<int> classes(labels.begin(), labels.end());
  if (!classes.empty() && (*classes.begin() != 0 || *classes.rbegin() + 1 != static_cast<int>(classes.size()))) {
    throw ParseError("non-contiguous labels: class ids must cover 0.." +
                     std::to_string(classes.size() - 1));
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<int>& columns) const {
  LabeledDataset out;
  out.height = height;
  out.width = width;
  out.data.resize(data.rows(), static_cast<Eigen::Index>(columns.size()));
  out.labels.reserve(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.data.col(static_cast<Eigen::Index>(j)) = data.col(columns[j]);
    out.labels.push_back(labels[columns[j]]);
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  KeyValues values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    values[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }
  return values;
}

void write_key_values(const KeyValues& values, const std::filesystem::path& path) {
  std::ofstream out(path);
  check_writable(out, path);
  for (const auto& [key, value] : values) out << key << '=' << value << '\n';
  check_writable(out, path);
}

std::string format_number(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

namespace {

const std::string& require_key(const KeyValues& kv, const std::string& key,
                               const std::filesystem::path& path) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ParseError(path.string() + ": missing key '" + key + "'");
  return it->second;
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("invalid value '" + text + "' for " + key);
  }
  return value;
}

}  // namespace

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
  const KeyValues kv = read_key_values(path);
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  DatasetManifest m;
  m.data_path = resolve(require_key(kv, "data_path", path));
  m.labels_path = resolve(require_key(kv, "labels_path", path));
  m.height = parse_number<int>(require_key(kv, "height", path), "height");
  m.width = parse_number<int>(require_key(kv, "width", path), "width");
  m.value_min = parse_number<double>(require_key(kv, "value_min", path), "value_min");
  m.value_max = parse_number<double>(require_key(kv, "value_max", path), "value_max");
  if (!(m.value_max > m.value_min)) throw ParseError("value_max must exceed value_min");
  return m;
}

void DatasetManifest::write(const std::filesystem::path& path) const {
  write_key_values({{"data_path", data_path.string()},
                    {"labels_path", labels_path.string()},
                    {"height", std::to_string(height)},
                    {"width", std::to_string(width)},
                    {"value_min", format_number(value_min)},
                    {"value_max", format_number(value_max)}},
                   path);
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<int> labels;
  std::string token;
  while (in >> token) {
    labels.push_back(parse_number<int>(token, "label " + std::to_string(labels.size())));
  }
  return labels;
}

void save_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  check_writable(out, path);
  for (int label : labels) out << label << '\n';
  check_writable(out, path);
}

LabeledDataset load_dataset(const DatasetManifest& manifest) {
  if (!(manifest.value_max > manifest.value_min)) {
    throw ParseError("value_max must exceed value_min");
  }
  LabeledDataset ds;
  ds.data = load_matrix(manifest.data_path);
  ds.labels = load_labels(manifest.labels_path);
  ds.height = manifest.height;
  ds.width = manifest.width;
  ds.validate();
  const double span = manifest.value_max - manifest.value_min;
  ds.data = (ds.data.array() - manifest.value_min) / span;
  return ds;
}

void export_image_pgm(const Vector& v, int height, int width, const std::filesystem::path& path) {
  if (height <= 0 || width <= 0 || v.size() != static_cast<Eigen::Index>(height) * width) {
    throw InvalidArgument("length mismatch: vector of " + std::to_string(v.size()) +
                          " values cannot render as " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (hi > lo) {
      const double scaled = (v[i] - lo) / (hi - lo) * 255.0;
      pixels[i] = static_cast<std::uint8_t>(std::clamp(std::floor(scaled + 0.5), 0.0, 255.0));
    } else {
      pixels[i] = 128;
    }
  }
  std::ofstream out(path, std::ios::binary);
  check_writable(out, path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  check_writable(out, path);
}

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  PgmImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (!in || magic != "P5" || maxval != 255 || img.width <= 0 || img.height <= 0) {
    throw ParseError("malformed PGM header in " + path.string());
  }
  in.get();  // single whitespace before the raster
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw ParseError("truncated PGM raster in " + path.string());
  return img;
}

}  // namespace crt
