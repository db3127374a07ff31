#include "crt/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crt/error.hpp"

namespace crt {
namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Axis-aligned rectangle of `budget` pixels: a side x side square followed by
// a partial row (or column, when there is no vertical room) of the remainder.
void block_mask(int budget, int height, int width, std::mt19937_64& rng, std::vector<bool>& px) {
  int side = static_cast<int>(std::floor(std::sqrt(static_cast<double>(budget))));
  side = std::min({side, height, width});
  const int extent = (budget + side - 1) / side;  // square plus padding lines
  const bool vertical = extent <= height;
  if (!vertical && extent > width) throw InvalidArgument("block budget does not fit the image");
  const int rows = vertical ? extent : side;
  const int cols = vertical ? side : extent;
  const int r0 = uniform_int(rng, 0, height - rows);
  const int c0 = uniform_int(rng, 0, width - cols);
  for (int k = 0; k < budget; ++k) {
    // Fill row by row (vertical) or column by column, so the overflow past
    // the square lands in a single partial line adjacent to it.
    const int r = vertical ? k / side : k % side;
    const int c = vertical ? k % side : k / side;
    px[static_cast<std::size_t>(r0 + r) * width + (c0 + c)] = true;
  }
}

// One horizontal and one vertical bar of thickness t through a random
// centre; t is the thinnest cross holding the budget, and the arms are then
// trimmed from their far ends (by distance to the centre) to exactly `budget`.
void cross_mask(int budget, int height, int width, std::mt19937_64& rng, std::vector<bool>& px) {
  int t = 1;
  while (t * (height + width) - t * t < budget) ++t;
  if (t > std::min(height, width)) throw InvalidArgument("cross budget does not fit the image");
  const int r0 = uniform_int(rng, 0, height - t);
  const int c0 = uniform_int(rng, 0, width - t);
  const double rc = r0 + (t - 1) / 2.0;
  const double cc = c0 + (t - 1) / 2.0;

  struct Candidate {
    double distance;
    int index;
  };
  std::vector<Candidate> cells;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const bool in_row_bar = r >= r0 && r < r0 + t;
      const bool in_col_bar = c >= c0 && c < c0 + t;
      if (in_row_bar || in_col_bar) {
        cells.push_back({std::abs(r - rc) + std::abs(c - cc), r * width + c});
      }
    }
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Candidate& a, const Candidate& b) { return a.distance < b.distance; });
  for (int k = 0; k < budget; ++k) px[static_cast<std::size_t>(cells[k].index)] = true;
}

void salt_pepper_mask(int budget, int height, int width, std::mt19937_64& rng,
                      std::vector<bool>& px) {
  const int total = height * width;
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `budget` slots are a uniform sample.
  for (int k = 0; k < budget; ++k) {
    std::swap(order[k], order[uniform_int(rng, k, total - 1)]);
    px[static_cast<std::size_t>(order[k])] = true;
  }
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kBlock: return "block";
    case NoiseKind::kCross: return "cross";
    case NoiseKind::kSaltPepper: return "saltpepper";
  }
  return "block";
}

std::string to_string(FillRule fill) {
  switch (fill) {
    case FillRule::kZeros: return "zeros";
    case FillRule::kMax: return "max";
    case FillRule::kRandomBinary: return "random_binary";
  }
  return "zeros";
}

NoiseKind parse_noise_kind(const std::string& text) {
  if (text == "block") return NoiseKind::kBlock;
  if (text == "cross") return NoiseKind::kCross;
  if (text == "saltpepper" || text == "salt_pepper") return NoiseKind::kSaltPepper;
  throw InvalidArgument("unknown corruption kind '" + text + "'");
}

FillRule parse_fill_rule(const std::string& text) {
  if (text == "zeros") return FillRule::kZeros;
  if (text == "max") return FillRule::kMax;
  if (text == "random_binary") return FillRule::kRandomBinary;
  throw InvalidArgument("unknown fill rule '" + text + "'");
}

FillRule default_fill(NoiseKind kind) {
  return kind == NoiseKind::kSaltPepper ? FillRule::kRandomBinary : FillRule::kZeros;
}

void CorruptionSpec::validate() const {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("fraction must lie in (0, 1)");
}

CorruptionSpec CorruptionSpec::with_default_fill(NoiseKind kind, double fraction,
                                                 std::uint64_t seed) {
  return CorruptionSpec{kind, fraction, seed, default_fill(kind)};
}

std::size_t CorruptionMask::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), true));
}

int pixel_budget(const CorruptionSpec& spec, int height, int width) {
  spec.validate();
  if (height <= 0 || width <= 0) throw InvalidArgument("image geometry must be positive");
  const int total = height * width;
  const int budget = static_cast<int>(std::lround(spec.fraction * total));
  if (budget <= 0) throw InvalidArgument("corruption budget rounds to 0 pixels");
  if (budget >= total) throw InvalidArgument("corruption budget covers the whole image");
  return budget;
}

CorruptionMask make_mask(const CorruptionSpec& spec, int height, int width, std::mt19937_64& rng) {
  const int budget = pixel_budget(spec, height, width);
  CorruptionMask mask;
  mask.pixels.assign(static_cast<std::size_t>(height) * width, false);
  switch (spec.kind) {
    case NoiseKind::kBlock: block_mask(budget, height, width, rng, mask.pixels); break;
    case NoiseKind::kCross: cross_mask(budget, height, width, rng, mask.pixels); break;
    case NoiseKind::kSaltPepper: salt_pepper_mask(budget, height, width, rng, mask.pixels); break;
  }
  return mask;
}

CorruptedDataset apply_corruption(const LabeledDataset& data, const CorruptionSpec& spec) {
  data.validate();
  pixel_budget(spec, data.height, data.width);
  CorruptedDataset out;
  out.data = data;
  out.masks.resize(static_cast<std::size_t>(data.data.cols()));
  const Eigen::Index n = data.data.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    std::mt19937_64 rng(spec.seed ^ static_cast<std::uint64_t>(j));
    CorruptionMask mask = make_mask(spec, data.height, data.width, rng);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
      if (!mask.pixels[i]) continue;
      double value = 0.0;
      switch (spec.fill) {
        case FillRule::kZeros: value = 0.0; break;
        case FillRule::kMax: value = 1.0; break;
        case FillRule::kRandomBinary: value = coin(rng) ? 1.0 : 0.0; break;
      }
      out.data.data(static_cast<Eigen::Index>(i), j) = value;
    }
    out.masks[static_cast<std::size_t>(j)] = std::move(mask);
  }
  return out;
}

}  // namespace crt
