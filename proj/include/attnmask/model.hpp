#pragma once

#include <cstdint>
#include <vector>

#include "attnmask/backbone.hpp"
#include "attnmask/box.hpp"
#include "attnmask/losses.hpp"
#include "attnmask/roi_align.hpp"
#include "attnmask/synth.hpp"

namespace attnmask {

struct ModelConfig {
  AttentionVariant attention = AttentionVariant::kCbam;
  StageConfig stages = StageConfig::toy();
  int reduction = 4;
  int eca_kernel = 0;
  int fpn_dim = 32;
  bool with_p6 = true;
  AnchorConfig anchors{{0.5, 1.0, 2.0}, {8, 16, 32, 64, 128}};
  RoiAlignConfig box_roi{7, RoiAggregation::kMax};
  RoiAlignConfig mask_roi{14, RoiAggregation::kMax};
  int head_hidden = 64;
  int mask_hidden = 16;
  int num_classes = 3;  // foreground classes K; category ids are 1..K

  // Region proposals.
  int rpn_pre_nms = 1000;
  int rpn_post_nms = 100;
  double rpn_nms_iou = 0.7;
  AnchorLabelConfig rpn_labels;

  // Second-stage sampling.
  int roi_batch = 32;
  double roi_fg_fraction = 0.25;
  double roi_fg_iou = 0.5;
  int max_mask_rois = 8;
  // Level routing for ROIs: clamp(floor(k0 + log2(sqrt(wh) / canonical))).
  double roi_canonical_size = 224.0;

  double detection_nms_iou = 0.5;
  int max_detections = 100;
  LossWeights loss_weights;

  static ModelConfig reference();
  static ModelConfig toy() { return {}; }
  void validate() const;
};

struct DetectionResult {
  Box box;
  int category_id = 0;
  double score = 0.0;
  BinaryMask mask;  // image-sized
};

struct StepLoss {
  Var total;
  LossReport report;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  // Backbone + FPN on a fresh or shared graph.
  PyramidFeatures features(Graph& g, Var image) const;
  std::vector<LevelShape> level_shapes(int height, int width) const;

  // Composite loss for one image. rng drives anchor and ROI sampling.
  StepLoss loss(Graph& g, const Sample& sample, Rng& rng) const;

  std::vector<DetectionResult> infer(const Tensor& image, double conf_threshold = 0.5) const;

 private:
  struct RpnOutputs {
    std::vector<Var> logits;  // per level, A x H x W
    std::vector<Var> deltas;  // per level, 4A x H x W
  };
  struct Proposal {
    Box box;
    double score;
  };
  struct HeadOutputs {
    Var logits;  // (K + 1) x 1 x 1
    Var deltas;  // 4 x 1 x 1
  };

  RpnOutputs rpn(Graph& g, const PyramidFeatures& p) const;
  std::vector<Proposal> proposals(const RpnOutputs& out, const std::vector<Anchor>& anchors,
                                  const std::vector<LevelShape>& shapes, int height, int width) const;
  const PyramidLevel& level_for(const PyramidFeatures& p, const Box& roi) const;
  HeadOutputs box_head(Graph& g, const PyramidFeatures& p, const Box& roi) const;
  Var mask_logits(Graph& g, const PyramidFeatures& p, const Box& roi, int category) const;

  ModelConfig cfg_;
  ParamStore params_;
  BackboneParams backbone_;
  FpnParams fpn_;
  ConvParams rpn_conv_, rpn_cls_, rpn_reg_;
  LinearParams head_fc_, head_cls_, head_reg_;
  ConvParams mask_conv1_, mask_conv2_, mask_pred_;
};

// Mask target: the object's mask sampled at the centres of a size x size grid
// laid over the ROI.
Tensor mask_target(const BinaryMask& mask, const Box& roi, int size);

}  // namespace attnmask
