#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnmask/metrics.hpp"

namespace attnmask {

// Raised for unreadable or inconsistent COCO files. The message names the
// offending record, e.g. "annotations[3] (id 17): bbox must have 4 numbers".
class CocoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CocoImage {
  std::int64_t id = 0;
  int width = 0;
  int height = 0;
};

struct CocoGroundTruth {
  std::vector<CocoImage> images;
  std::map<int, std::string> categories;
  std::vector<GtRecord> annotations;
};

CocoGroundTruth parse_coco_gt(const std::string& json_text);
// Detections must reference known images and categories.
std::vector<Detection> parse_coco_detections(const std::string& json_text, const CocoGroundTruth& gt);

std::string coco_gt_json(const CocoGroundTruth& gt);
std::string coco_detections_json(const std::vector<Detection>& dets);

// Per-threshold mAP and per-class AP plus the three aggregates.
std::string eval_report_json(const EvalReport& report);

// Accepts a comma list of numbers and the word "coco" for 0.50:0.05:0.95.
std::vector<double> parse_thresholds(const std::string& spec);

}  // namespace attnmask
