#include <gtest/gtest.h>

#include <cmath>

#include "attnmask/gradcheck.hpp"
#include "attnmask/gradient_suite.hpp"
#include "attnmask/losses.hpp"
#include "test_util.hpp"

namespace attnmask {
namespace {

using testing::random_tensor;

const double kLn2 = std::log(2.0);

TEST(ClsLoss, Fixtures) {
  EXPECT_NEAR(cls_loss(0.5, 1.0), kLn2, 1e-12);
  EXPECT_NEAR(cls_loss(0.5, 0.0), kLn2, 1e-12);
  EXPECT_NEAR(cls_loss(1.0, 1.0), 0.0, 1e-6);
  EXPECT_NEAR(cls_loss(0.0, 0.0), 0.0, 1e-6);
  // Clamped endpoint stays finite.
  EXPECT_NEAR(cls_loss(0.0, 1.0), -std::log(kProbEpsilon), 1e-9);
  EXPECT_NEAR(cls_loss(0.8, 1.0), -std::log(0.8), 1e-15);
  EXPECT_NEAR(cls_loss(0.8, 0.0), -std::log(0.2), 1e-12);
}

TEST(SmoothL1, FixturesAndContinuity) {
  EXPECT_EQ(smooth_l1(0.5), 0.125);
  EXPECT_EQ(smooth_l1(2.0), 1.5);
  EXPECT_EQ(smooth_l1(-2.0), 1.5);
  EXPECT_EQ(smooth_l1(0.0), 0.0);
  EXPECT_EQ(smooth_l1(1.0), 0.5);
  EXPECT_EQ(smooth_l1(-1.0), 0.5);
  for (double h : {1e-3, 1e-6, 1e-9}) {
    for (double s : {1.0, -1.0}) {
      const double lo = smooth_l1(s * (1.0 - h)), hi = smooth_l1(s * (1.0 + h));
      EXPECT_NEAR(lo, 0.5, 2 * h);
      EXPECT_NEAR(hi, 0.5, 2 * h);
      EXPECT_LE(std::abs(hi - lo), 2 * (2 * h));
    }
  }
  EXPECT_EQ(reg_loss(BoxDelta{1, 2, 3, 4}, BoxDelta{1, 2, 3, 4}), 0.0);
  EXPECT_EQ(reg_loss(BoxDelta{0.5, 0, -2, 0}, BoxDelta{}), 0.125 + 1.5);
}

MaskTarget uniform_mask(int p, double predicted, double target_on_fraction, Rng& rng) {
  MaskTarget m;
  m.size = p;
  for (int i = 0; i < p * p; ++i) {
    m.target.push_back(rng.bernoulli(target_on_fraction) ? 1.0 : 0.0);
    m.predicted.push_back(predicted);
  }
  return m;
}

TEST(MaskLoss, HalfPredictionGivesLn2) {
  Rng rng(1);
  for (double frac : {0.0, 0.3, 1.0}) EXPECT_NEAR(mask_loss(uniform_mask(7, 0.5, frac, rng)), kLn2, 1e-12);
}

TEST(MaskLoss, PerfectPredictionIsNearZero) {
  Rng rng(2);
  MaskTarget m = uniform_mask(14, 0.0, 0.5, rng);
  m.predicted = m.target;
  EXPECT_LT(mask_loss(m), 1e-6);
}

TEST(MaskLoss, MeanInvariantUnderGridRefinement) {
  // Each 7x7 cell replicated into a 2x2 block of the 14x14 grid.
  Rng rng(3);
  MaskTarget coarse;
  coarse.size = 7;
  for (int i = 0; i < 49; ++i) {
    coarse.target.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    coarse.predicted.push_back(rng.uniform(0.01, 0.99));
  }
  MaskTarget fine;
  fine.size = 14;
  for (int y = 0; y < 14; ++y)
    for (int x = 0; x < 14; ++x) {
      fine.target.push_back(coarse.target[(y / 2) * 7 + x / 2]);
      fine.predicted.push_back(coarse.predicted[(y / 2) * 7 + x / 2]);
    }
  EXPECT_NEAR(mask_loss(coarse), mask_loss(fine), 1e-12);
}

TEST(MaskLoss, NegativeTermWithoutLogDiffersFromBce) {
  MaskTarget m;
  m.size = 1;
  m.target = {0.0};
  m.predicted = {0.25};
  EXPECT_NEAR(mask_loss(m), -std::log(0.75), 1e-15);
  EXPECT_NEAR(mask_loss(m, MaskLossForm::kNegativeTermWithoutLog), -0.75, 1e-15);
  m.target = {1.0};
  EXPECT_EQ(mask_loss(m), mask_loss(m, MaskLossForm::kNegativeTermWithoutLog));
}

TEST(MaskLoss, RejectsMalformedGrids) {
  MaskTarget m;
  m.size = 2;
  m.target = {0, 1, 1};
  m.predicted = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(mask_loss(m), std::invalid_argument);
  m.target = {0, 1, 1, 0.5};
  EXPECT_THROW(mask_loss(m), std::invalid_argument);
}

TEST(TotalLoss, HandComposition) {
  const std::vector<double> cls{kLn2, kLn2}, reg{0.125};
  const LossReport r = total_loss(cls, reg, kLn2, 2.0, 100.0);
  EXPECT_NEAR(r.total, 1.38754, 1e-5);
  EXPECT_NEAR(r.total, 2 * kLn2 + 0.00125, 1e-15);
  EXPECT_EQ(r.total, r.l_cls + r.l_reg + r.l_mask);
  EXPECT_EQ(total_loss({}, {}, 0.0, 0.0, 0.0).total, 0.0);
  const LossReport shifted = total_loss(cls, reg, kLn2 + 0.75, 2.0, 100.0);
  EXPECT_NEAR(shifted.total - r.total, 0.75, 1e-15);
  const LossReport weighted = total_loss(cls, reg, kLn2, 2.0, 100.0, LossWeights{1.0, 2.0, 0.5});
  EXPECT_NEAR(weighted.total, kLn2 + 0.0025 + 0.5 * kLn2, 1e-15);
  EXPECT_THROW(total_loss(cls, reg, 0.0, 0.0, 1.0), std::invalid_argument);
}

std::vector<Anchor> anchors_from(const std::vector<Box>& boxes) {
  std::vector<Anchor> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) out.push_back(Anchor{boxes[i], 2, i});
  return out;
}

TEST(AnchorLabels, ThresholdRule) {
  const Box gt = Box::from_corners(0, 0, 10, 10);
  const std::vector<Box> boxes{
      gt,                                     // identical
      Box::from_corners(50, 50, 60, 60),      // disjoint
      Box::from_corners(0, 0, 10, 20),        // IoU 0.5
      Box::from_corners(0, 0, 10, 40),        // IoU 0.25
  };
  const std::vector<Box> gts{gt};
  const auto a = label_anchors(anchors_from(boxes), gts, AnchorLabelConfig{});
  EXPECT_EQ(a.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(a.matched_gt[0], 0);
  EXPECT_EQ(a.labels[1], AnchorLabel::kNegative);
  EXPECT_EQ(a.labels[2], AnchorLabel::kIgnore);
  EXPECT_EQ(a.labels[3], AnchorLabel::kNegative);
  EXPECT_EQ(a.matched_gt[2], -1);
}

TEST(AnchorLabels, BestAnchorRescuedBelowThreshold) {
  const std::vector<Box> gts{Box::from_corners(0, 0, 10, 10)};
  const std::vector<Box> boxes{Box::from_corners(0, 0, 10, 40), Box::from_corners(0, 0, 10, 100)};
  const auto a = label_anchors(anchors_from(boxes), gts, AnchorLabelConfig{});
  EXPECT_EQ(a.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(a.labels[1], AnchorLabel::kNegative);
}

TEST(AnchorLabels, MinibatchCapsAndFraction) {
  Rng rng(4);
  std::vector<Box> gts, boxes;
  for (int k = 0; k < 5; ++k) gts.push_back(Box::make(100.0 * k + 50, 50, 40, 40));
  for (int i = 0; i < 600; ++i) {
    const int k = i % 5;
    if (i < 300) {
      boxes.push_back(Box::make(100.0 * k + 50 + rng.uniform(-1, 1), 50 + rng.uniform(-1, 1), 40, 40));
    } else {
      boxes.push_back(Box::make(rng.uniform(0, 500), rng.uniform(200, 400), 20, 20));
    }
  }
  AnchorLabelConfig cfg;
  const auto a = assign_anchor_labels(anchors_from(boxes), gts, cfg, rng);
  EXPECT_EQ(a.count(AnchorLabel::kPositive), 128u);
  EXPECT_EQ(a.count(AnchorLabel::kNegative), 128u);
  EXPECT_EQ(a.count(AnchorLabel::kIgnore), 600u - 256u);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const int want = a.labels[i] == AnchorLabel::kPositive ? static_cast<int>(i % 5) : -1;
    EXPECT_EQ(a.matched_gt[i], want);
  }
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  const std::vector<double> x{1.0, -2.0, 0.5, 800.0};
  const auto p = softmax(x);
  double s = 0.0;
  for (double v : p) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  std::vector<double> shifted = x;
  for (double& v : shifted) v -= 3.0;
  const auto q = softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(LossOps, MatchScalarForms) {
  Rng rng(5);
  Graph g;
  const Tensor probs = random_tensor({6}, rng, 0.01, 0.99);
  const std::vector<double> labels{1, 0, 1, 1, 0, 0};
  double want = 0.0;
  for (int i = 0; i < 6; ++i) want += cls_loss(probs[i], labels[i]);
  EXPECT_NEAR(loss_ops::cls_loss_sum(g.constant(probs), labels).value().item(), want, 1e-13);

  const Tensor deltas = random_tensor({8}, rng, -3, 3);
  const std::vector<double> targets(8, 0.25);
  want = 0.0;
  for (int i = 0; i < 8; ++i) want += smooth_l1(deltas[i] - 0.25);
  EXPECT_NEAR(loss_ops::reg_loss_sum(g.constant(deltas), targets).value().item(), want, 1e-13);

  MaskTarget m = uniform_mask(5, 0.0, 0.4, rng);
  Tensor mp({1, 5, 5}), mt({1, 5, 5});
  for (int i = 0; i < 25; ++i) {
    m.predicted[i] = rng.uniform(0.01, 0.99);
    mp[i] = m.predicted[i];
    mt[i] = m.target[i];
  }
  EXPECT_NEAR(loss_ops::mask_loss(g.constant(mp), mt).value().item(), mask_loss(m), 1e-13);

  const Tensor logits({3}, {0.2, -1.0, 2.0});
  const auto sm = softmax(logits.data());
  EXPECT_NEAR(loss_ops::softmax_cross_entropy(g.constant(logits), 1).value().item(), -std::log(sm[1]), 1e-13);
  EXPECT_THROW(loss_ops::softmax_cross_entropy(g.constant(logits), 3), std::out_of_range);
}

TEST(LossOps, SoftmaxCrossEntropyGradient) {
  Rng rng(6);
  for (int seed = 0; seed < 20; ++seed) {
    const Tensor logits = random_tensor({5}, rng, -3, 3);
    const int label = rng.uniform_int(0, 4);
    const ScalarFn f = [label](Graph&, Var x) { return loss_ops::softmax_cross_entropy(x, label); };
    EXPECT_LT(grad_check(f, logits).max_rel_error, 1e-5);
  }
}

TEST(LossGradients, FiniteDifferenceSuiteTwentySeeds) {
  for (const auto& e : run_gradient_suite("losses")) {
    EXPECT_TRUE(e.passed) << e.name << " max rel err " << e.max_rel_error;
    EXPECT_LT(e.max_rel_error, 1e-5) << e.name;
  }
}

}  // namespace
}  // namespace attnmask
