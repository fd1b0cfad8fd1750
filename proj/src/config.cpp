#include "attnmask/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace attnmask {

using nlohmann::json;

ExperimentConfig ExperimentConfig::smoke() {
  ExperimentConfig cfg;
  cfg.train.lr = 0.02;
  cfg.train.epochs = 26;
  cfg.train.steps_per_epoch = 12;
  cfg.train.step_epochs = {16, 22};
  cfg.train.seed = 1;
  return cfg;
}

ExperimentConfig ExperimentConfig::compare() {
  ExperimentConfig cfg = smoke();
  cfg.train.epochs = 13;
  cfg.train.steps_per_epoch = 6;
  cfg.train.step_epochs = {8, 11};
  cfg.data.n_train = 32;
  cfg.data.n_test = 16;
  return cfg;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  data.synth.validate();
  if (data.n_train < 1 || data.n_test < 1) throw std::invalid_argument("data: n_train and n_test must be >= 1");
  if (data.synth.num_classes > model.num_classes) {
    throw std::invalid_argument("data: more synthetic classes than the model predicts");
  }
}

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void take(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(where + "." + key + ": wrong type");
  }
}

void apply_model(const json& j, ModelConfig& m) {
  const std::string w = "model";
  check_keys(j, w, {"attention", "stage_blocks", "stage_widths", "stem_channels", "reduction",
                    "eca_kernel", "fpn_dim", "with_p6", "anchor_ratios", "anchor_scales",
                    "roi_aggregation", "head_hidden", "mask_hidden", "num_classes", "rpn_pre_nms",
                    "rpn_post_nms", "rpn_nms_iou", "roi_batch", "roi_fg_fraction", "roi_fg_iou",
                    "max_mask_rois", "detection_nms_iou", "max_detections", "loss_weights"});
  if (j.contains("attention")) m.attention = parse_attention_variant(j.at("attention").get<std::string>());
  take(j, "stage_blocks", m.stages.blocks, w);
  take(j, "stage_widths", m.stages.widths, w);
  take(j, "stem_channels", m.stages.stem_channels, w);
  take(j, "reduction", m.reduction, w);
  take(j, "eca_kernel", m.eca_kernel, w);
  take(j, "fpn_dim", m.fpn_dim, w);
  take(j, "with_p6", m.with_p6, w);
  take(j, "anchor_ratios", m.anchors.ratios, w);
  take(j, "anchor_scales", m.anchors.scales, w);
  if (j.contains("roi_aggregation")) {
    const auto s = j.at("roi_aggregation").get<std::string>();
    if (s != "max" && s != "avg") throw std::invalid_argument("model.roi_aggregation: expected max or avg");
    m.box_roi.aggregation = m.mask_roi.aggregation = s == "max" ? RoiAggregation::kMax : RoiAggregation::kAvg;
  }
  take(j, "head_hidden", m.head_hidden, w);
  take(j, "mask_hidden", m.mask_hidden, w);
  take(j, "num_classes", m.num_classes, w);
  take(j, "rpn_pre_nms", m.rpn_pre_nms, w);
  take(j, "rpn_post_nms", m.rpn_post_nms, w);
  take(j, "rpn_nms_iou", m.rpn_nms_iou, w);
  take(j, "roi_batch", m.roi_batch, w);
  take(j, "roi_fg_fraction", m.roi_fg_fraction, w);
  take(j, "roi_fg_iou", m.roi_fg_iou, w);
  take(j, "max_mask_rois", m.max_mask_rois, w);
  take(j, "detection_nms_iou", m.detection_nms_iou, w);
  take(j, "max_detections", m.max_detections, w);
  if (j.contains("loss_weights")) {
    const json& lw = j.at("loss_weights");
    check_keys(lw, "model.loss_weights", {"cls", "reg", "mask"});
    take(lw, "cls", m.loss_weights.cls, "model.loss_weights");
    take(lw, "reg", m.loss_weights.reg, "model.loss_weights");
    take(lw, "mask", m.loss_weights.mask, "model.loss_weights");
  }
}

void apply_train(const json& j, TrainConfig& t) {
  const std::string w = "train";
  check_keys(j, w, {"lr", "momentum", "weight_decay", "epochs", "batch_size", "step_epochs", "gamma",
                    "steps_per_epoch", "hflip", "seed"});
  take(j, "lr", t.lr, w);
  take(j, "momentum", t.momentum, w);
  take(j, "weight_decay", t.weight_decay, w);
  take(j, "epochs", t.epochs, w);
  take(j, "batch_size", t.batch_size, w);
  take(j, "step_epochs", t.step_epochs, w);
  take(j, "gamma", t.gamma, w);
  take(j, "steps_per_epoch", t.steps_per_epoch, w);
  take(j, "hflip", t.hflip, w);
  take(j, "seed", t.seed, w);
}

void apply_data(const json& j, DataConfig& d) {
  const std::string w = "data";
  check_keys(j, w, {"canvas", "num_classes", "min_objects", "max_objects", "min_size", "max_size",
                    "distractor_prob", "occlusion_prob", "noise", "n_train", "n_test",
                    "eval_conf_threshold"});
  take(j, "canvas", d.synth.canvas, w);
  take(j, "num_classes", d.synth.num_classes, w);
  take(j, "min_objects", d.synth.min_objects, w);
  take(j, "max_objects", d.synth.max_objects, w);
  take(j, "min_size", d.synth.min_size, w);
  take(j, "max_size", d.synth.max_size, w);
  take(j, "distractor_prob", d.synth.distractor_prob, w);
  take(j, "occlusion_prob", d.synth.occlusion_prob, w);
  take(j, "noise", d.synth.noise, w);
  take(j, "n_train", d.n_train, w);
  take(j, "n_test", d.n_test, w);
  take(j, "eval_conf_threshold", d.eval_conf_threshold, w);
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text, const ExperimentConfig& base) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig cfg = base;
  check_keys(doc, "config", {"model", "train", "data"});
  if (doc.contains("model")) apply_model(doc.at("model"), cfg.model);
  if (doc.contains("train")) apply_train(doc.at("train"), cfg.train);
  if (doc.contains("data")) apply_data(doc.at("data"), cfg.data);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path, const ExperimentConfig& base) {
  return parse_experiment_config(read_text_file(path), base);
}

std::string to_json(const ExperimentConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  const DataConfig& d = cfg.data;
  json doc;
  doc["model"] = {
      {"attention", to_string(m.attention)},
      {"stage_blocks", m.stages.blocks},
      {"stage_widths", m.stages.widths},
      {"stem_channels", m.stages.stem_channels},
      {"reduction", m.reduction},
      {"eca_kernel", m.eca_kernel},
      {"fpn_dim", m.fpn_dim},
      {"with_p6", m.with_p6},
      {"anchor_ratios", m.anchors.ratios},
      {"anchor_scales", m.anchors.scales},
      {"roi_aggregation", m.box_roi.aggregation == RoiAggregation::kMax ? "max" : "avg"},
      {"head_hidden", m.head_hidden},
      {"mask_hidden", m.mask_hidden},
      {"num_classes", m.num_classes},
      {"rpn_pre_nms", m.rpn_pre_nms},
      {"rpn_post_nms", m.rpn_post_nms},
      {"rpn_nms_iou", m.rpn_nms_iou},
      {"roi_batch", m.roi_batch},
      {"roi_fg_fraction", m.roi_fg_fraction},
      {"roi_fg_iou", m.roi_fg_iou},
      {"max_mask_rois", m.max_mask_rois},
      {"detection_nms_iou", m.detection_nms_iou},
      {"max_detections", m.max_detections},
      {"loss_weights", {{"cls", m.loss_weights.cls}, {"reg", m.loss_weights.reg}, {"mask", m.loss_weights.mask}}},
  };
  doc["train"] = {
      {"lr", t.lr},
      {"momentum", t.momentum},
      {"weight_decay", t.weight_decay},
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"step_epochs", t.step_epochs},
      {"gamma", t.gamma},
      {"steps_per_epoch", t.steps_per_epoch},
      {"hflip", t.hflip},
      {"seed", t.seed},
  };
  doc["data"] = {
      {"canvas", d.synth.canvas},
      {"num_classes", d.synth.num_classes},
      {"min_objects", d.synth.min_objects},
      {"max_objects", d.synth.max_objects},
      {"min_size", d.synth.min_size},
      {"max_size", d.synth.max_size},
      {"distractor_prob", d.synth.distractor_prob},
      {"occlusion_prob", d.synth.occlusion_prob},
      {"noise", d.synth.noise},
      {"n_train", d.n_train},
      {"n_test", d.n_test},
      {"eval_conf_threshold", d.eval_conf_threshold},
  };
  return doc.dump(2) + "\n";
}

DataSplit make_split(const DataConfig& cfg, std::uint64_t seed) {
  std::vector<Sample> all = synth_dataset(cfg.synth, seed, cfg.n_train + cfg.n_test);
  DataSplit split;
  split.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + cfg.n_train));
  split.test.assign(std::make_move_iterator(all.begin() + cfg.n_train), std::make_move_iterator(all.end()));
  return split;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace attnmask
