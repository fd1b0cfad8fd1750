#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "attnmask/gradient_suite.hpp"
#include "attnmask/roi_align.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace attnmask {
namespace {

using oracle::dense_roi_align;
using testing::random_tensor;

TEST(Bilinear, ExactAtCellCentersAndMidpoints) {
  Rng rng(1);
  const Tensor f = random_tensor({2, 4, 5}, rng);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(bilinear_sample(f, 1, i + 0.5, j + 0.5), f.at(1, j, i));
  EXPECT_NEAR(bilinear_sample(f, 0, 1.0, 0.5), 0.5 * (f.at(0, 0, 0) + f.at(0, 0, 1)), 1e-15);
  // Border margin reads the edge cell; beyond it reads zero.
  EXPECT_DOUBLE_EQ(bilinear_sample(f, 0, -0.4, 0.5), f.at(0, 0, 0));
  EXPECT_EQ(bilinear_sample(f, 0, -0.6, 0.5), 0.0);
  EXPECT_EQ(bilinear_sample(f, 0, 2.0, 4.6), 0.0);
}

TEST(RoiAlign, ConstantMapGivesConstantBins) {
  const Tensor f({3, 8, 8}, 2.5);
  Graph g;
  for (auto agg : {RoiAggregation::kMax, RoiAggregation::kAvg}) {
    const Tensor out = roi_align(g.constant(f), 4, Box::from_corners(3.3, 1.7, 29.0, 20.2), RoiAlignConfig{7, agg}).value();
    ASSERT_EQ(out.shape(), (Shape{3, 7, 7}));
    for (double v : out.data()) EXPECT_NEAR(v, 2.5, 1e-14);
  }
}

TEST(RoiAlign, MatchesDenseOracleOnRandomRois) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(2, 9), w = rng.uniform_int(2, 9), stride = 1 << rng.uniform_int(0, 3);
    const Tensor f = random_tensor({2, h, w}, rng);
    // ROIs may extend past the image on any side.
    const double x1 = rng.uniform(-0.3, 1.1) * w * stride, y1 = rng.uniform(-0.3, 1.1) * h * stride;
    const Box roi = Box::from_corners(x1, y1, x1 + rng.uniform(0.2, 1.0) * w * stride, y1 + rng.uniform(0.2, 1.0) * h * stride);
    const int p = rng.uniform_int(1, 7);
    const auto agg = rng.bernoulli(0.5) ? RoiAggregation::kMax : RoiAggregation::kAvg;
    Graph g;
    const Tensor got = roi_align(g.constant(f), stride, roi, RoiAlignConfig{p, agg}).value();
    EXPECT_LT(testing::max_abs_diff(got, dense_roi_align(f, stride, roi, p, agg)), 1e-6) << "trial " << trial;
  }
}

TEST(RoiAlign, TwoByTwoFullMap) {
  const Tensor f({1, 2, 2}, {1, 2, 3, 4});
  Graph g;
  const Tensor out = roi_align(g.constant(f), 1, Box::from_corners(0, 0, 2, 2), RoiAlignConfig{1}).value();
  // Quarter points (0.5, 0.5) .. (1.5, 1.5) land on the cell centers, max is 4.
  EXPECT_DOUBLE_EQ(out[0], 4.0);
  EXPECT_DOUBLE_EQ(out[0], dense_roi_align(f, 1, Box::from_corners(0, 0, 2, 2), 1, RoiAggregation::kMax)[0]);
  const Tensor avg = roi_align(g.constant(f), 1, Box::from_corners(0, 0, 2, 2), RoiAlignConfig{1, RoiAggregation::kAvg}).value();
  EXPECT_DOUBLE_EQ(avg[0], 2.5);
}

TEST(RoiAlign, TranslationByWholeCells) {
  Rng rng(3);
  const Tensor f = random_tensor({2, 12, 12}, rng);
  Tensor shifted({2, 12, 12});
  const int dx = 2, dy = 3;
  for (int c = 0; c < 2; ++c)
    for (int y = dy; y < 12; ++y)
      for (int x = dx; x < 12; ++x) shifted.at(c, y, x) = f.at(c, y - dy, x - dx);
  const int stride = 4;
  const Box roi = Box::from_corners(6.3, 5.1, 27.7, 31.0);
  const Box moved = Box::make(roi.cx + dx * stride, roi.cy + dy * stride, roi.w, roi.h);
  Graph g;
  const Tensor a = roi_align(g.constant(f), stride, roi, RoiAlignConfig{5}).value();
  const Tensor b = roi_align(g.constant(shifted), stride, moved, RoiAlignConfig{5}).value();
  EXPECT_LT(testing::max_abs_diff(a, b), 1e-12);
}

TEST(RoiAlign, MaxAggregationIsMonotone) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor f = random_tensor({1, 6, 6}, rng);
    const Box roi = Box::from_corners(rng.uniform(-4, 10), rng.uniform(-4, 10), rng.uniform(12, 30), rng.uniform(12, 30));
    Graph g;
    const Tensor before = roi_align(g.constant(f), 4, roi, RoiAlignConfig{3}).value();
    f[static_cast<std::size_t>(rng.uniform_int(0, 35))] += rng.uniform(0, 2);
    const Tensor after = roi_align(g.constant(f), 4, roi, RoiAlignConfig{3}).value();
    for (std::size_t i = 0; i < before.size(); ++i) ASSERT_GE(after[i], before[i]);
  }
}

TEST(RoiAlign, RejectsBadArguments) {
  Graph g;
  Var f = g.constant(Tensor({1, 4, 4}));
  EXPECT_THROW(roi_align(f, 4, Box::make(4, 4, 2, 2), RoiAlignConfig{0}), std::invalid_argument);
  EXPECT_THROW(roi_align(f, 0, Box::make(4, 4, 2, 2), RoiAlignConfig{}), std::invalid_argument);
  EXPECT_THROW(roi_align(g.constant(Tensor({4, 4})), 4, Box::make(4, 4, 2, 2), RoiAlignConfig{}), std::invalid_argument);
}

TEST(AssignLevel, CanonicalSizes) {
  EXPECT_EQ(assign_level(Box::make(0, 0, 224, 224)), 4);
  EXPECT_EQ(assign_level(Box::make(0, 0, 223, 224)), 3);
  EXPECT_EQ(assign_level(Box::make(0, 0, 112, 112)), 3);
  EXPECT_EQ(assign_level(Box::make(0, 0, 448, 448)), 5);
  EXPECT_EQ(assign_level(Box::make(0, 0, 2000, 2000)), 5);
  EXPECT_EQ(assign_level(Box::make(0, 0, 56, 56)), 2);
  EXPECT_EQ(assign_level(Box::make(0, 0, 3, 3)), 2);
  // Non-square boxes use sqrt(area).
  EXPECT_EQ(assign_level(Box::make(0, 0, 112, 448)), 4);
}

TEST(RoiAlignGradients, FiniteDifferenceSuiteTwentySeeds) {
  for (const auto& e : run_gradient_suite("roialign")) {
    EXPECT_TRUE(e.passed) << e.name << " max rel err " << e.max_rel_error << " skipped " << e.skipped;
  }
}

}  // namespace
}  // namespace attnmask
