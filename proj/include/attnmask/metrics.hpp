#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnmask/box.hpp"

namespace attnmask {

struct Detection {
  std::int64_t image_id = 0;
  int category_id = 0;
  Box box;
  double score = 0.0;
};

struct GtRecord {
  std::int64_t image_id = 0;
  int category_id = 0;
  Box box;
  bool iscrowd = false;
};

enum class MatchFlag : std::int8_t { kIgnored = -1, kFalsePositive = 0, kTruePositive = 1 };

struct MatchResult {
  // Detection indices in visit order (score descending, ties to lower index).
  std::vector<std::size_t> order;
  // Flag per visited detection, aligned with order.
  std::vector<MatchFlag> flags;
  int n_gt = 0;  // non-crowd ground truths
  int unmatched_gt = 0;
};

// Greedy matching within one (image, class) group. Each detection takes the
// unmatched non-crowd GT or crowd GT with highest IoU (non-crowd first on
// ties); IoU >= threshold gives TP against a non-crowd GT and removes the
// detection from scoring against a crowd GT, otherwise FP.
MatchResult match(std::span<const Detection> dets, std::span<const GtRecord> gts,
                  double iou_threshold);

struct PrCurve {
  std::vector<double> precision;
  std::vector<double> recall;
  int n_gt = 0;
};

// Cumulative precision/recall over TP flags sorted by descending score.
PrCurve pr_curve(const std::vector<bool>& tp_flags, int n_gt);

enum class ApMethod { kInterpolated101, kTrapezoid };

// Area under the precision envelope. Default samples 101 recall points.
double average_precision(const PrCurve& curve, ApMethod method = ApMethod::kInterpolated101);

struct ClassResult {
  int category_id = 0;
  double ap = 0.0;
  PrCurve curve;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct ThresholdResult {
  double iou_threshold = 0.0;
  std::vector<ClassResult> classes;  // categories with at least one GT
  double map = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct EvalReport {
  std::vector<ThresholdResult> thresholds;
  std::optional<double> map50;
  std::optional<double> map75;
  std::optional<double> map_coco;  // mean over the ten COCO thresholds

  const ThresholdResult* at(double iou_threshold) const;
};

struct EvalOptions {
  std::size_t max_dets = 100;  // per (image, class), by score
  ApMethod method = ApMethod::kInterpolated101;
};

// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

EvalReport map_report(std::span<const Detection> dets, std::span<const GtRecord> gts,
                      std::span<const double> thresholds, const EvalOptions& options = {});

// Thresholds needed for mAP^0.5, mAP^0.75 and mAP^COCO.
EvalReport map_report(std::span<const Detection> dets, std::span<const GtRecord> gts,
                      const EvalOptions& options = {});

// Missing aggregates (thresholds not evaluated) print as "-".
struct TableRow {
  std::string model;
  std::optional<double> map50;
  std::optional<double> map75;
  std::optional<double> map_coco;
};

// Markdown table, one row per model, columns mAP^0.5 | mAP^0.75 | mAP^COCO.
std::string format_results_table(std::span<const TableRow> rows);
TableRow table_row(const std::string& model, const EvalReport& report);

}  // namespace attnmask
