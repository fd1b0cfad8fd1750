#include "attnmask/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace attnmask {

std::size_t AnchorAssignment::count(AnchorLabel l) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

AnchorAssignment label_anchors(std::span<const Anchor> anchors, std::span<const Box> gt_boxes,
                               const AnchorLabelConfig& cfg) {
  AnchorAssignment a;
  const std::size_t n = anchors.size();
  a.labels.assign(n, AnchorLabel::kIgnore);
  a.matched_gt.assign(n, -1);
  a.max_iou.assign(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best(gt_boxes.size(), 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < gt_boxes.size(); ++j) {
      const double v = iou(anchors[i].box, gt_boxes[j]);
      if (v > a.max_iou[i]) {
        a.max_iou[i] = v;
        best_gt[i] = static_cast<int>(j);
      }
      gt_best[j] = std::max(gt_best[j], v);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (a.max_iou[i] <= cfg.negative_iou) a.labels[i] = AnchorLabel::kNegative;
  }
  // Every GT keeps its best anchors (ties included), even below the threshold.
  for (std::size_t j = 0; j < gt_boxes.size(); ++j) {
    if (gt_best[j] <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (iou(anchors[i].box, gt_boxes[j]) == gt_best[j]) {
        a.labels[i] = AnchorLabel::kPositive;
        a.matched_gt[i] = static_cast<int>(j);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (a.max_iou[i] >= cfg.positive_iou) {
      a.labels[i] = AnchorLabel::kPositive;
      a.matched_gt[i] = best_gt[i];
    }
  }
  return a;
}

AnchorAssignment assign_anchor_labels(std::span<const Anchor> anchors,
                                      std::span<const Box> gt_boxes,
                                      const AnchorLabelConfig& cfg, Rng& rng) {
  AnchorAssignment a = label_anchors(anchors, gt_boxes, cfg);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    if (a.labels[i] == AnchorLabel::kPositive) pos.push_back(i);
    if (a.labels[i] == AnchorLabel::kNegative) neg.push_back(i);
  }
  const auto max_pos = static_cast<std::size_t>(cfg.batch_size * cfg.positive_fraction);
  if (pos.size() > max_pos) {
    rng.shuffle(pos);
    for (std::size_t k = max_pos; k < pos.size(); ++k) {
      a.labels[pos[k]] = AnchorLabel::kIgnore;
      a.matched_gt[pos[k]] = -1;
    }
    pos.resize(max_pos);
  }
  const std::size_t max_neg = static_cast<std::size_t>(cfg.batch_size) - pos.size();
  if (neg.size() > max_neg) {
    rng.shuffle(neg);
    for (std::size_t k = max_neg; k < neg.size(); ++k) a.labels[neg[k]] = AnchorLabel::kIgnore;
  }
  return a;
}

double clamp_probability(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

double cls_loss(double p, double label) {
  const double q = clamp_probability(p);
  return -std::log(q * label + (1.0 - label) * (1.0 - q));
}

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double reg_loss(const BoxDelta& t, const BoxDelta& target) {
  return smooth_l1(t.tx - target.tx) + smooth_l1(t.ty - target.ty) +
         smooth_l1(t.tw - target.tw) + smooth_l1(t.th - target.th);
}

double mask_loss(const MaskTarget& m, MaskLossForm form) {
  const auto cells = static_cast<std::size_t>(m.size) * static_cast<std::size_t>(m.size);
  if (m.size < 1 || m.target.size() != cells || m.predicted.size() != cells) {
    throw std::invalid_argument("mask_loss: grids must both hold p*p values");
  }
  std::vector<double> terms(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const double y = clamp_probability(m.predicted[i]);
    const double t = m.target[i];
    if (t != 0.0 && t != 1.0) throw std::invalid_argument("mask_loss: target must be binary");
    terms[i] = form == MaskLossForm::kBinaryCrossEntropy
                   ? -(t * std::log(y) + (1.0 - t) * std::log(1.0 - y))
                   : -(t * std::log(y) + (1.0 - t) * (1.0 - y));
  }
  return pairwise_sum(terms) / static_cast<double>(cells);
}

LossReport total_loss(std::span<const double> cls_terms, std::span<const double> reg_terms,
                      double mask_term, double n_cls, double n_reg, const LossWeights& weights) {
  if (!(n_cls > 0.0) && !cls_terms.empty()) throw std::invalid_argument("total_loss: N_cls must be > 0");
  if (!(n_reg > 0.0) && !reg_terms.empty()) throw std::invalid_argument("total_loss: N_reg must be > 0");
  LossReport r;
  r.n_cls = n_cls;
  r.n_reg = n_reg;
  r.weights = weights;
  r.l_cls = cls_terms.empty() ? 0.0 : pairwise_sum(cls_terms) / n_cls;
  r.l_reg = reg_terms.empty() ? 0.0 : pairwise_sum(reg_terms) / n_reg;
  r.l_mask = mask_term;
  r.total = weights.cls * r.l_cls + weights.reg * r.l_reg + weights.mask * r.l_mask;
  return r;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double m = *std::max_element(out.begin(), out.end());
  for (double& v : out) v = std::exp(v - m);
  const double s = pairwise_sum(out);
  for (double& v : out) v /= s;
  return out;
}

namespace loss_ops {

Var cls_loss_sum(Var probs, std::span<const double> labels) {
  const Tensor& pv = probs.value();
  if (pv.size() != labels.size()) throw std::invalid_argument("cls_loss_sum: length mismatch");
  std::vector<double> terms(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) terms[i] = cls_loss(pv[i], labels[i]);
  std::vector<double> lab(labels.begin(), labels.end());
  return probs.graph->record(
      Tensor::scalar(pairwise_sum(terms)), {probs},
      [&pv, lab = std::move(lab)](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < lab.size(); ++i) {
          const double p = pv[i];
          if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) continue;  // clamped: flat
          // d/dp of -log(p) or -log(1 - p).
          const double d = lab[i] == 1.0 ? -1.0 / p : 1.0 / (1.0 - p);
          (*gin[0])[i] += g[0] * d;
        }
      });
}

Var reg_loss_sum(Var deltas, std::span<const double> targets) {
  const Tensor& dv = deltas.value();
  if (dv.size() != targets.size()) throw std::invalid_argument("reg_loss_sum: length mismatch");
  std::vector<double> diff(targets.size()), terms(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    diff[i] = dv[i] - targets[i];
    terms[i] = smooth_l1(diff[i]);
  }
  return deltas.graph->record(
      Tensor::scalar(pairwise_sum(terms)), {deltas},
      [diff = std::move(diff)](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < diff.size(); ++i) {
          const double d = diff[i];
          const double slope = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
          (*gin[0])[i] += g[0] * slope;
        }
      });
}

Var mask_loss(Var probs, const Tensor& target) {
  const Tensor& pv = probs.value();
  if (pv.size() != target.size()) throw std::invalid_argument("mask_loss: size mismatch");
  const auto cells = static_cast<double>(pv.size());
  std::vector<double> terms(pv.size());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double y = clamp_probability(pv[i]);
    const double t = target[i];
    terms[i] = -(t * std::log(y) + (1.0 - t) * std::log(1.0 - y));
  }
  return probs.graph->record(
      Tensor::scalar(pairwise_sum(terms) / cells), {probs},
      [&pv, target, cells](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double y = pv[i];
          if (y < kProbEpsilon || y > 1.0 - kProbEpsilon) continue;
          const double t = target[i];
          (*gin[0])[i] += g[0] * (-t / y + (1.0 - t) / (1.0 - y)) / cells;
        }
      });
}

Var softmax_cross_entropy(Var logits, int label) {
  const Tensor& lv = logits.value();
  if (label < 0 || static_cast<std::size_t>(label) >= lv.size()) {
    throw std::out_of_range("softmax_cross_entropy: label out of range");
  }
  std::vector<double> probs = softmax(lv.data());
  const double m = *std::max_element(lv.data().begin(), lv.data().end());
  std::vector<double> shifted(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) shifted[i] = std::exp(lv[i] - m);
  const double loss = -(lv[static_cast<std::size_t>(label)] - m - std::log(pairwise_sum(shifted)));
  return logits.graph->record(
      Tensor::scalar(loss), {logits},
      [probs = std::move(probs), label](const Tensor&, const Tensor& g,
                                        std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          const double onehot = static_cast<int>(i) == label ? 1.0 : 0.0;
          (*gin[0])[i] += g[0] * (probs[i] - onehot);
        }
      });
}

}  // namespace loss_ops
}  // namespace attnmask
