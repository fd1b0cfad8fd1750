#include "attnmask/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "attnmask/ops.hpp"

namespace attnmask {

ModelConfig ModelConfig::reference() {
  ModelConfig cfg;
  cfg.stages = StageConfig::reference();
  cfg.reduction = 16;
  cfg.fpn_dim = 256;
  cfg.anchors = AnchorConfig{};
  cfg.head_hidden = 1024;
  cfg.mask_hidden = 256;
  cfg.roi_batch = 512;
  cfg.max_mask_rois = 128;
  return cfg;
}

void ModelConfig::validate() const {
  stages.validate();
  anchors.validate();
  if (num_classes < 1) throw std::invalid_argument("model: num_classes must be >= 1");
  if (fpn_dim < 1 || head_hidden < 1 || mask_hidden < 1) {
    throw std::invalid_argument("model: layer widths must be positive");
  }
  const std::size_t levels = with_p6 ? 5 : 4;
  if (anchors.scales.size() < levels) {
    throw std::invalid_argument("model: need one anchor scale per pyramid level");
  }
  if (rpn_pre_nms < 1 || rpn_post_nms < 1 || roi_batch < 1) {
    throw std::invalid_argument("model: proposal and ROI budgets must be positive");
  }
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  BackboneConfig bcfg;
  bcfg.stages = cfg_.stages;
  bcfg.attention = cfg_.attention;
  bcfg.reduction = cfg_.reduction;
  bcfg.eca_kernel = cfg_.eca_kernel;
  backbone_ = make_backbone(params_, bcfg, rng);
  fpn_ = make_fpn(params_, cfg_.stages.widths, cfg_.fpn_dim, cfg_.with_p6, rng);

  const int d = cfg_.fpn_dim;
  const int a = static_cast<int>(cfg_.anchors.ratios.size());
  rpn_conv_ = make_conv(params_, "rpn.conv", d, d, 3, 1, Init::kHeUniform, rng);
  rpn_cls_ = make_conv(params_, "rpn.objectness", d, a, 1, 1, Init::kSmall, rng);
  rpn_reg_ = make_conv(params_, "rpn.deltas", d, 4 * a, 1, 1, Init::kSmall, rng);

  const int p = cfg_.box_roi.output_size;
  head_fc_ = make_linear(params_, "box_head.fc", d * p * p, cfg_.head_hidden, Init::kHeUniform, rng);
  head_cls_ = make_linear(params_, "box_head.cls", cfg_.head_hidden, cfg_.num_classes + 1,
                          Init::kSmall, rng);
  head_reg_ = make_linear(params_, "box_head.deltas", cfg_.head_hidden, 4, Init::kSmall, rng);

  const int m = cfg_.mask_hidden;
  mask_conv1_ = make_conv(params_, "mask_head.conv1", d, m, 3, 1, Init::kHeUniform, rng);
  mask_conv2_ = make_conv(params_, "mask_head.conv2", m, m, 3, 1, Init::kHeUniform, rng);
  mask_pred_ = make_conv(params_, "mask_head.predictor", m, cfg_.num_classes, 1, 1,
                         Init::kFanInUniform, rng);
}

PyramidFeatures Model::features(Graph& g, Var image) const {
  return fpn_fuse(g, backbone_forward(g, image, backbone_), fpn_);
}

std::vector<LevelShape> Model::level_shapes(int height, int width) const {
  std::vector<LevelShape> out;
  // Stem and every later stage halve the extent with ceil semantics.
  int h = height, w = width;
  auto half = [](int v) { return (v - 1) / 2 + 1; };
  h = half(half(h));
  w = half(half(w));
  const int top = cfg_.with_p6 ? 6 : 5;
  for (int level = 2; level <= top; ++level) {
    out.push_back(LevelShape{level, 1 << level, h, w});
    h = half(h);
    w = half(w);
  }
  return out;
}

Model::RpnOutputs Model::rpn(Graph& g, const PyramidFeatures& p) const {
  RpnOutputs out;
  for (const auto& level : p.levels) {
    Var t = ops::relu(conv(g, level.map, rpn_conv_));
    out.logits.push_back(conv(g, t, rpn_cls_));
    out.deltas.push_back(conv(g, t, rpn_reg_));
  }
  return out;
}

namespace {

struct AnchorSlot {
  std::size_t level_index;
  std::size_t logit;     // element index in the level's A x H x W logits
  std::size_t delta[4];  // element indices in the level's 4A x H x W deltas
};

std::vector<AnchorSlot> anchor_slots(const std::vector<LevelShape>& shapes, int ratios) {
  std::vector<AnchorSlot> slots;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto plane = static_cast<std::size_t>(shapes[l].height) * shapes[l].width;
    for (std::size_t pos = 0; pos < plane; ++pos) {
      for (int a = 0; a < ratios; ++a) {
        AnchorSlot s{l, a * plane + pos, {}};
        for (int k = 0; k < 4; ++k) s.delta[k] = (4 * a + k) * plane + pos;
        slots.push_back(s);
      }
    }
  }
  return slots;
}

BoxDelta delta_at(const Tensor& deltas, const AnchorSlot& s) {
  return BoxDelta{deltas[s.delta[0]], deltas[s.delta[1]], deltas[s.delta[2]], deltas[s.delta[3]]};
}

}  // namespace

std::vector<Model::Proposal> Model::proposals(const RpnOutputs& out,
                                              const std::vector<Anchor>& anchors,
                                              const std::vector<LevelShape>& shapes, int height,
                                              int width) const {
  const auto slots = anchor_slots(shapes, static_cast<int>(cfg_.anchors.ratios.size()));
  std::vector<double> scores(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    scores[i] = ops::sigmoid(out.logits[slots[i].level_index].value()[slots[i].logit]);
  }
  std::vector<std::size_t> order(anchors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (order.size() > static_cast<std::size_t>(cfg_.rpn_pre_nms)) order.resize(cfg_.rpn_pre_nms);

  std::vector<Box> boxes;
  std::vector<double> kept_scores;
  for (std::size_t i : order) {
    const BoxDelta d = delta_at(out.deltas[slots[i].level_index].value(), slots[i]);
    const Box decoded = decode(anchors[i].box, d, DecodeOptions{true});
    const auto clipped = clip_box(decoded, width, height);
    if (!clipped || clipped->w < 1.0 || clipped->h < 1.0) continue;
    boxes.push_back(*clipped);
    kept_scores.push_back(scores[i]);
  }
  std::vector<Proposal> result;
  for (std::size_t k : nms(boxes, kept_scores, cfg_.rpn_nms_iou, 0.0)) {
    result.push_back(Proposal{boxes[k], kept_scores[k]});
    if (result.size() >= static_cast<std::size_t>(cfg_.rpn_post_nms)) break;
  }
  return result;
}

const PyramidLevel& Model::level_for(const PyramidFeatures& p, const Box& roi) const {
  return p.at(assign_level(roi, 4, cfg_.roi_canonical_size, 2, 5));
}

Model::HeadOutputs Model::box_head(Graph& g, const PyramidFeatures& p, const Box& roi) const {
  const PyramidLevel& level = level_for(p, roi);
  Var pooled = roi_align(level.map, level.stride, roi, cfg_.box_roi);
  Var hidden = ops::relu(linear(g, pooled, head_fc_));
  return HeadOutputs{linear(g, hidden, head_cls_), linear(g, hidden, head_reg_)};
}

Var Model::mask_logits(Graph& g, const PyramidFeatures& p, const Box& roi, int category) const {
  const PyramidLevel& level = level_for(p, roi);
  Var x = roi_align(level.map, level.stride, roi, cfg_.mask_roi);
  x = ops::relu(conv(g, x, mask_conv1_));
  x = ops::relu(conv(g, x, mask_conv2_));
  x = ops::upsample_nearest(x, 2);
  return ops::select_channel(conv(g, x, mask_pred_), category - 1);
}

Tensor mask_target(const BinaryMask& mask, const Box& roi, int size) {
  Tensor t({1, size, size}, 0.0);
  for (int i = 0; i < size; ++i) {
    const double py = roi.y1() + (i + 0.5) * roi.h / size;
    const int y = static_cast<int>(std::floor(py));
    if (y < 0 || y >= mask.height) continue;
    for (int j = 0; j < size; ++j) {
      const double px = roi.x1() + (j + 0.5) * roi.w / size;
      const int x = static_cast<int>(std::floor(px));
      if (x < 0 || x >= mask.width) continue;
      t[static_cast<std::size_t>(i) * size + j] = mask.at(y, x) ? 1.0 : 0.0;
    }
  }
  return t;
}

StepLoss Model::loss(Graph& g, const Sample& sample, Rng& rng) const {
  const int height = sample.height(), width = sample.width();
  Var image = g.constant(sample.image);
  const PyramidFeatures p = features(g, image);
  const std::vector<LevelShape> shapes = level_shapes(height, width);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    if (p.levels[l].map.value().height() != shapes[l].height ||
        p.levels[l].map.value().width() != shapes[l].width) {
      throw std::logic_error("pyramid shape differs from the anchor layout");
    }
  }
  const std::vector<Anchor> anchors = generate_anchors(shapes, cfg_.anchors);
  const RpnOutputs out = rpn(g, p);
  const auto slots = anchor_slots(shapes, static_cast<int>(cfg_.anchors.ratios.size()));

  // Region proposal losses.
  const AnchorAssignment assign = assign_anchor_labels(anchors, sample.boxes, cfg_.rpn_labels, rng);
  const std::size_t n_levels = shapes.size();
  std::vector<std::vector<std::size_t>> cls_idx(n_levels), reg_idx(n_levels);
  std::vector<std::vector<double>> cls_lab(n_levels), reg_tgt(n_levels);
  std::size_t n_sampled = 0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (assign.labels[i] == AnchorLabel::kIgnore) continue;
    const AnchorSlot& s = slots[i];
    ++n_sampled;
    cls_idx[s.level_index].push_back(s.logit);
    const bool positive = assign.labels[i] == AnchorLabel::kPositive;
    cls_lab[s.level_index].push_back(positive ? 1.0 : 0.0);
    if (positive) {
      const auto t = encode(anchors[i].box, sample.boxes[assign.matched_gt[i]]).as_array();
      for (int k = 0; k < 4; ++k) {
        reg_idx[s.level_index].push_back(s.delta[k]);
        reg_tgt[s.level_index].push_back(t[k]);
      }
    }
  }
  Var zero = g.constant(Tensor::scalar(0.0));
  std::vector<Var> rpn_cls_terms{zero}, rpn_reg_terms{zero};
  double n_reg = 0.0;
  for (std::size_t l = 0; l < n_levels; ++l) {
    n_reg += static_cast<double>(shapes[l].height) * shapes[l].width;
    if (!cls_idx[l].empty()) {
      Var probs = ops::sigmoid(ops::gather(out.logits[l], cls_idx[l]));
      rpn_cls_terms.push_back(loss_ops::cls_loss_sum(probs, cls_lab[l]));
    }
    if (!reg_idx[l].empty()) {
      rpn_reg_terms.push_back(loss_ops::reg_loss_sum(ops::gather(out.deltas[l], reg_idx[l]), reg_tgt[l]));
    }
  }
  const double n_cls = std::max<std::size_t>(n_sampled, 1);

  // Second stage: proposals plus ground truth, sampled into fg/bg ROIs.
  std::vector<Box> candidates;
  for (const auto& prop : proposals(out, anchors, shapes, height, width)) candidates.push_back(prop.box);
  candidates.insert(candidates.end(), sample.boxes.begin(), sample.boxes.end());
  std::vector<std::size_t> fg, bg;
  std::vector<int> cand_gt(candidates.size(), -1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < sample.boxes.size(); ++j) {
      const double v = iou(candidates[i], sample.boxes[j]);
      if (v > best) {
        best = v;
        cand_gt[i] = static_cast<int>(j);
      }
    }
    (best >= cfg_.roi_fg_iou ? fg : bg).push_back(i);
  }
  rng.shuffle(fg);
  rng.shuffle(bg);
  const auto max_fg = static_cast<std::size_t>(cfg_.roi_batch * cfg_.roi_fg_fraction);
  if (fg.size() > max_fg) fg.resize(max_fg);
  const std::size_t max_bg = static_cast<std::size_t>(cfg_.roi_batch) - fg.size();
  if (bg.size() > max_bg) bg.resize(max_bg);

  std::vector<Var> head_cls_terms{zero}, head_reg_terms{zero}, mask_terms;
  const int mask_size = cfg_.mask_roi.output_size * 2;
  for (std::size_t k = 0; k < fg.size(); ++k) {
    const Box& roi = candidates[fg[k]];
    const int gt = cand_gt[fg[k]];
    const int category = sample.classes[gt];
    const HeadOutputs h = box_head(g, p, roi);
    head_cls_terms.push_back(loss_ops::softmax_cross_entropy(h.logits, category));
    const auto t = encode(roi, sample.boxes[gt]).as_array();
    head_reg_terms.push_back(loss_ops::reg_loss_sum(h.deltas, t));
    if (k < static_cast<std::size_t>(cfg_.max_mask_rois)) {
      Var probs = ops::sigmoid(mask_logits(g, p, roi, category));
      mask_terms.push_back(loss_ops::mask_loss(probs, mask_target(sample.masks[gt], roi, mask_size)));
    }
  }
  for (std::size_t i : bg) {
    head_cls_terms.push_back(loss_ops::softmax_cross_entropy(box_head(g, p, candidates[i]).logits, 0));
  }
  const double n_rois = std::max<std::size_t>(fg.size() + bg.size(), 1);

  Var l_cls = ops::add(ops::scale(ops::add_n(rpn_cls_terms), 1.0 / n_cls),
                       ops::scale(ops::add_n(head_cls_terms), 1.0 / n_rois));
  Var l_reg = ops::add(ops::scale(ops::add_n(rpn_reg_terms), 1.0 / n_reg),
                       ops::scale(ops::add_n(head_reg_terms), 1.0 / n_rois));
  Var l_mask = mask_terms.empty()
                   ? zero
                   : ops::scale(ops::add_n(mask_terms), 1.0 / static_cast<double>(mask_terms.size()));
  const LossWeights& w = cfg_.loss_weights;
  const std::array<Var, 3> parts{ops::scale(l_cls, w.cls), ops::scale(l_reg, w.reg),
                                 ops::scale(l_mask, w.mask)};

  StepLoss result{ops::add_n(parts), {}};
  result.report.l_cls = l_cls.value().item();
  result.report.l_reg = l_reg.value().item();
  result.report.l_mask = l_mask.value().item();
  result.report.total = result.total.value().item();
  result.report.n_cls = n_cls;
  result.report.n_reg = n_reg;
  result.report.weights = w;
  return result;
}

std::vector<DetectionResult> Model::infer(const Tensor& image, double conf_threshold) const {
  require_rank(image, 3, "infer image");
  const int height = image.height(), width = image.width();
  Graph g(&params_);
  const PyramidFeatures p = features(g, g.constant(image));
  const std::vector<LevelShape> shapes = level_shapes(height, width);
  const std::vector<Anchor> anchors = generate_anchors(shapes, cfg_.anchors);
  const RpnOutputs out = rpn(g, p);

  struct Candidate {
    Box box;
    int category;
    double score;
  };
  std::vector<std::vector<Candidate>> per_class(static_cast<std::size_t>(cfg_.num_classes) + 1);
  for (const auto& prop : proposals(out, anchors, shapes, height, width)) {
    const HeadOutputs h = box_head(g, p, prop.box);
    const std::vector<double> probs = softmax(h.logits.value().data());
    const Tensor& dv = h.deltas.value();
    const Box decoded = decode(prop.box, BoxDelta{dv[0], dv[1], dv[2], dv[3]}, DecodeOptions{true});
    const auto clipped = clip_box(decoded, width, height);
    if (!clipped) continue;
    for (int k = 1; k <= cfg_.num_classes; ++k) {
      if (probs[k] >= conf_threshold) per_class[k].push_back(Candidate{*clipped, k, probs[k]});
    }
  }

  std::vector<Candidate> kept;
  for (int k = 1; k <= cfg_.num_classes; ++k) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (const auto& c : per_class[k]) {
      boxes.push_back(c.box);
      scores.push_back(c.score);
    }
    for (std::size_t i : nms(boxes, scores, cfg_.detection_nms_iou, conf_threshold)) {
      kept.push_back(per_class[k][i]);
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (kept.size() > static_cast<std::size_t>(cfg_.max_detections)) kept.resize(cfg_.max_detections);

  std::vector<DetectionResult> results;
  for (const auto& c : kept) {
    DetectionResult r{c.box, c.category, c.score, BinaryMask(height, width)};
    const Tensor probs = ops::sigmoid(mask_logits(g, p, c.box, c.category)).value();
    const int m = probs.width();
    for (int y = 0; y < height; ++y) {
      const double py = y + 0.5;
      if (py < c.box.y1() || py > c.box.y2()) continue;
      for (int x = 0; x < width; ++x) {
        const double px = x + 0.5;
        if (px < c.box.x1() || px > c.box.x2()) continue;
        const double u = (px - c.box.x1()) / c.box.w * m;
        const double v = (py - c.box.y1()) / c.box.h * m;
        r.mask.at(y, x) = bilinear_sample(probs, 0, u, v) >= 0.5 ? 1 : 0;
      }
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace attnmask
