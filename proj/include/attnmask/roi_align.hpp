#pragma once

#include <array>

#include "attnmask/box.hpp"
#include "attnmask/graph.hpp"

namespace attnmask {

struct Roi {
  Box box;  // image coordinates
  int image_id = 0;
  int level = 2;
};

enum class RoiAggregation { kMax, kAvg };

struct RoiAlignConfig {
  static constexpr int kSamplesPerBin = 4;  // 2 x 2 grid at bin quarter points

  int output_size = 7;
  RoiAggregation aggregation = RoiAggregation::kMax;
};

// clamp(floor(k0 + log2(sqrt(w h) / canonical)), min_level, max_level)
int assign_level(const Box& box, int k0 = 4, double canonical = 224.0, int min_level = 2,
                 int max_level = 5);

// Bilinear interpolation weights for a point in continuous feature
// coordinates (cell centers at integer + 0.5). Positions beyond half a cell
// outside the map read zero; inside that margin the nearest border cell is
// used.
struct BilinearTap {
  std::array<std::size_t, 4> offset{};  // y * W + x
  std::array<double, 4> weight{};
  bool valid = false;
};
BilinearTap bilinear_tap(int height, int width, double x, double y);

double bilinear_sample(const Tensor& feature, int channel, double x, double y);

// feature: C x H x W at the given stride; output C x p x p.
Var roi_align(Var feature, int stride, const Box& roi, const RoiAlignConfig& cfg);

}  // namespace attnmask
