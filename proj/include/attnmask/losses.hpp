#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnmask/box.hpp"
#include "attnmask/graph.hpp"
#include "attnmask/random.hpp"

namespace attnmask {

// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before logs.
inline constexpr double kProbEpsilon = 1e-7;

enum class AnchorLabel : std::int8_t { kIgnore = -1, kNegative = 0, kPositive = 1 };

struct AnchorLabelConfig {
  double positive_iou = 0.7;
  double negative_iou = 0.3;
  int batch_size = 256;
  double positive_fraction = 0.5;
};

struct AnchorAssignment {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;  // -1 unless positive
  std::vector<double> max_iou;

  std::size_t count(AnchorLabel l) const;
};

// IoU >= positive_iou, or best anchor for some GT: positive. Max IoU <=
// negative_iou: negative. Otherwise ignore. Then a random minibatch of at most
// batch_size anchors is kept (positives capped at the fraction); the rest
// become ignore.
AnchorAssignment assign_anchor_labels(std::span<const Anchor> anchors,
                                      std::span<const Box> gt_boxes,
                                      const AnchorLabelConfig& cfg, Rng& rng);

// Labeling rule only, no minibatch sampling.
AnchorAssignment label_anchors(std::span<const Anchor> anchors, std::span<const Box> gt_boxes,
                               const AnchorLabelConfig& cfg);

double clamp_probability(double p);

// -log[p p* + (1 - p*)(1 - p)]
double cls_loss(double p, double label);

// 0.5 d^2 if |d| < 1, |d| - 0.5 otherwise.
double smooth_l1(double d);
// Smooth L1 summed over the four components.
double reg_loss(const BoxDelta& t, const BoxDelta& target);

enum class MaskLossForm {
  kBinaryCrossEntropy,
  // (1 - y)(1 - p) in place of (1 - y) log(1 - p). Tests only.
  kNegativeTermWithoutLog,
};

struct MaskTarget {
  int size = 0;                 // p
  std::vector<double> target;   // p*p values in {0, 1}
  std::vector<double> predicted;  // p*p probabilities
  int class_id = 0;
};

// Mean over the p x p grid of the per-cell binary cross entropy.
double mask_loss(const MaskTarget& m, MaskLossForm form = MaskLossForm::kBinaryCrossEntropy);

struct LossWeights {
  double cls = 1.0;
  double reg = 1.0;
  double mask = 1.0;
};

struct LossReport {
  double l_cls = 0.0;   // (1 / N_cls) sum of classification terms
  double l_reg = 0.0;   // (1 / N_reg) sum of regression terms
  double l_mask = 0.0;
  double total = 0.0;   // weighted sum of the three, plain sum by default
  double n_cls = 0.0;
  double n_reg = 0.0;
  LossWeights weights;
};

LossReport total_loss(std::span<const double> cls_terms, std::span<const double> reg_terms,
                      double mask_term, double n_cls, double n_reg,
                      const LossWeights& weights = {});

// Differentiable forms used in training.
namespace loss_ops {

// Sum over elements of cls_loss(p_i, label_i). probs: {n}.
Var cls_loss_sum(Var probs, std::span<const double> labels);
// Sum of smooth L1 over all elements of deltas - targets.
Var reg_loss_sum(Var deltas, std::span<const double> targets);
// Mean binary cross entropy of a 1 x p x p probability map.
Var mask_loss(Var probs, const Tensor& target);
// -log softmax(logits)[label]; logits any shape with K elements.
Var softmax_cross_entropy(Var logits, int label);

}  // namespace loss_ops

std::vector<double> softmax(std::span<const double> logits);

}  // namespace attnmask
