#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace attnmask {

// Center-form box in continuous pixel coordinates, origin at the top-left
// image corner. Area is w * h (no +1 convention).
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  // Throws std::invalid_argument unless w > 0 and h > 0 and all finite.
  static Box make(double cx, double cy, double w, double h);
  static Box from_corners(double x1, double y1, double x2, double y2);
  // COCO [x_topleft, y_topleft, w, h].
  static Box from_coco(const std::array<double, 4>& xywh);

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  std::array<double, 4> corners() const { return {x1(), y1(), x2(), y2()}; }
  std::array<double, 4> to_coco() const { return {x1(), y1(), w, h}; }

  friend bool operator==(const Box&, const Box&) = default;
};

// Clips to [0, width] x [0, height]; nullopt when nothing positive remains.
std::optional<Box> clip_box(const Box& b, double width, double height);

double intersection_area(const Box& a, const Box& b);
// Intersection area over union area.
double iou(const Box& a, const Box& b);

struct Anchor {
  Box box;
  int level = 2;
  std::size_t index = 0;  // flat index over all levels
};

struct BoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;

  std::array<double, 4> as_array() const { return {tx, ty, tw, th}; }
  friend bool operator==(const BoxDelta&, const BoxDelta&) = default;
};

// |tw|, |th| limit applied by decode.
inline constexpr double kMaxLogScale = 6.907755278982137;  // log(1000)

BoxDelta encode(const Box& anchor, const Box& target);

struct DecodeOptions {
  // Clamp |tw|, |th| to kMaxLogScale instead of rejecting larger values.
  bool clamp_log_scale = false;
};

Box decode(const Box& anchor, const BoxDelta& delta, const DecodeOptions& options = {});

struct AnchorConfig {
  // Aspect ratio is h / w; each anchor preserves the area scale^2.
  std::vector<double> ratios{0.5, 1.0, 2.0};
  // One scale per level, P2 first.
  std::vector<double> scales{32, 64, 128, 256, 512};

  static std::vector<double> extended_ratios() { return {1.0 / 3.0, 0.5, 1.0, 2.0, 3.0}; }
  void validate() const;
};

struct LevelShape {
  int level = 2;
  int stride = 4;
  int height = 0;
  int width = 0;
};

// Per level, |ratios| anchors per pixel centered at ((x + 0.5) s, (y + 0.5) s).
// Flat order: level, then y, then x, then ratio.
std::vector<Anchor> generate_anchors(std::span<const LevelShape> levels,
                                     const AnchorConfig& cfg);

// Greedy NMS: drops scores below score_threshold, visits the rest by
// descending score (ties to the lower index) and suppresses any box whose IoU
// with a kept box exceeds iou_threshold. Returns kept indices in visit order.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold, double score_threshold = 0.5);

}  // namespace attnmask
