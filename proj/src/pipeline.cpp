#include "attnmask/pipeline.hpp"

#include <chrono>
#include <filesystem>

#include "attnmask/checkpoint.hpp"
#include "attnmask/coco_io.hpp"

namespace attnmask {

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const TrainCallback& on_step) {
  cfg.validate();
  const DataSplit split = make_split(cfg.data, seed);
  RunResult run;
  run.train_hash = dataset_hash(split.train);
  run.test_hash = dataset_hash(split.test);
  run.model = std::make_unique<Model>(cfg.model, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  run.trace = train(*run.model, split.train, tc, on_step);
  run.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.eval = collect_detections(*run.model, split.test, cfg.data.eval_conf_threshold);
  run.report = map_report(run.eval.detections, run.eval.ground_truth);
  return run;
}

double mean_loss(const std::vector<TrainRecord>& trace, std::size_t first, std::size_t last) {
  last = std::min(last, trace.size());
  if (first >= last) return 0.0;
  double sum = 0.0;
  for (std::size_t i = first; i < last; ++i) sum += trace[i].l_total;
  return sum / static_cast<double>(last - first);
}

LossDrop loss_drop(const std::vector<TrainRecord>& trace) {
  const std::size_t n = trace.size();
  return LossDrop{mean_loss(trace, 10, 60), mean_loss(trace, n > 50 ? n - 50 : 0, n)};
}

std::string variant_label(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kNone:
      return "Mask RCNN";
    case AttentionVariant::kEca:
      return "Mask RCNN + ECA";
    case AttentionVariant::kSe:
      return "Mask RCNN + SE";
    case AttentionVariant::kCbam:
      return "Mask RCNN + CBAM";
  }
  return "Mask RCNN";
}

CompareResult run_compare(const ExperimentConfig& cfg, std::uint64_t seed,
                          const std::function<void(AttentionVariant, const TrainRecord&)>& on_step) {
  CompareResult result;
  result.variants = {AttentionVariant::kNone, AttentionVariant::kEca, AttentionVariant::kSe, AttentionVariant::kCbam};
  for (AttentionVariant v : result.variants) {
    ExperimentConfig c = cfg;
    c.model.attention = v;
    TrainCallback cb;
    if (on_step) cb = [&](const TrainRecord& r) { on_step(v, r); };
    const RunResult run = run_experiment(c, seed, cb);
    result.dataset_hashes.push_back(run.train_hash ^ (run.test_hash * 0x9e3779b97f4a7c15ULL));
    result.rows.push_back(table_row(variant_label(v), run.report));
  }
  result.identical_data = true;
  for (std::uint64_t h : result.dataset_hashes) result.identical_data = result.identical_data && h == result.dataset_hashes[0];
  result.table = format_results_table(result.rows);
  return result;
}

void write_run_artifacts(const RunResult& run, const ExperimentConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  write_text_file((root / "config.json").string(), to_json(cfg));
  save_checkpoint(run.model->params(), (root / "checkpoint.bin").string());
  write_text_file((root / "loss.csv").string(), trace_csv(run.trace));

  CocoGroundTruth gt;
  std::int64_t max_id = -1;
  for (const auto& g : run.eval.ground_truth) max_id = std::max(max_id, g.image_id);
  for (const auto& d : run.eval.detections) max_id = std::max(max_id, d.image_id);
  for (std::int64_t i = 0; i <= max_id; ++i) gt.images.push_back(CocoImage{i, cfg.data.synth.canvas, cfg.data.synth.canvas});
  const char* names[] = {"rectangle", "disk", "triangle"};
  for (int k = 1; k <= cfg.model.num_classes; ++k) gt.categories[k] = k <= 3 ? names[k - 1] : "class" + std::to_string(k);
  gt.annotations = run.eval.ground_truth;
  write_text_file((root / "ground_truth.json").string(), coco_gt_json(gt));
  write_text_file((root / "detections.json").string(), coco_detections_json(run.eval.detections));
  write_text_file((root / "eval.json").string(), eval_report_json(run.report));
  const TableRow row = table_row(variant_label(cfg.model.attention), run.report);
  write_text_file((root / "table.md").string(), format_results_table(std::span(&row, 1)));
}

}  // namespace attnmask
