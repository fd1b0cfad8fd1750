#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "attnmask/box.hpp"
#include "attnmask/tensor.hpp"

namespace attnmask {

// Binary H x W raster.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t area() const;
  // Tight box over set pixels; pixel (x, y) covers [x, x+1) x [y, y+1).
  std::optional<Box> tight_box() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct Sample {
  Tensor image;                // 3 x H x W, values in [0, 1]
  std::vector<Box> boxes;      // tight boxes of the masks
  std::vector<int> classes;    // category ids 1..K
  std::vector<BinaryMask> masks;

  int height() const { return image.height(); }
  int width() const { return image.width(); }
};

struct SynthSpec {
  int canvas = 64;
  // Classes in order: rectangle, disk, triangle (at most 3), each with its own
  // colour. Distractors are rings and crosses in other colours.
  int num_classes = 3;
  int min_objects = 1;
  int max_objects = 3;
  int min_size = 14;
  int max_size = 30;
  double distractor_prob = 0.3;
  // Probability that a new object is placed overlapping an earlier one by
  // 20-60 % of its area.
  double occlusion_prob = 0.0;
  double noise = 0.03;

  void validate() const;
};

std::vector<Sample> synth_dataset(const SynthSpec& spec, std::uint64_t seed, int n);

// FNV-1a over images, boxes, classes and masks.
std::uint64_t dataset_hash(const std::vector<Sample>& samples);

enum class AugmentOp { kHFlip, kRot90, kCrop };

struct CropRegion {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

// Objects keep iff at least 25 % of their mask area survives a crop.
Sample augment(const Sample& s, AugmentOp op, const CropRegion& region = {});

}  // namespace attnmask
