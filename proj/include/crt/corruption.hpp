#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crt/matrix_io.hpp"

namespace crt {

enum class NoiseKind { kBlock, kCross, kSaltPepper };
enum class FillRule { kZeros, kMax, kRandomBinary };

std::string to_string(NoiseKind kind);
std::string to_string(FillRule fill);
NoiseKind parse_noise_kind(const std::string& text);
FillRule parse_fill_rule(const std::string& text);

// Salt-and-pepper fills with random 0/1 values, block and cross with zeros.
FillRule default_fill(NoiseKind kind);

struct CorruptionSpec {
  NoiseKind kind = NoiseKind::kBlock;
  double fraction = 0.10;
  std::uint64_t seed = 0;
  FillRule fill = FillRule::kZeros;

  void validate() const;
  static CorruptionSpec with_default_fill(NoiseKind kind, double fraction, std::uint64_t seed);
};

struct CorruptionMask {
  std::vector<bool> pixels;  // row-major, true = corrupted

  std::size_t count() const;
};

// round(fraction * height * width); throws when it is 0 or covers the image.
int pixel_budget(const CorruptionSpec& spec, int height, int width);

CorruptionMask make_mask(const CorruptionSpec& spec, int height, int width, std::mt19937_64& rng);

struct CorruptedDataset {
  LabeledDataset data;
  std::vector<CorruptionMask> masks;  // one per column
};

// Column j draws its mask and fill values from mt19937_64(seed ^ j).
CorruptedDataset apply_corruption(const LabeledDataset& data, const CorruptionSpec& spec);

}  // namespace crt
