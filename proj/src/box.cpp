#include "attnmask/box.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace attnmask {

Box Box::make(double cx, double cy, double w, double h) {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h)) {
    throw std::invalid_argument("box coordinates must be finite");
  }
  if (w <= 0.0 || h <= 0.0) {
    throw std::invalid_argument("degenerate box: w=" + std::to_string(w) +
                                " h=" + std::to_string(h));
  }
  return Box{cx, cy, w, h};
}

Box Box::from_corners(double x1, double y1, double x2, double y2) {
  return make(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1);
}

Box Box::from_coco(const std::array<double, 4>& xywh) {
  return make(xywh[0] + 0.5 * xywh[2], xywh[1] + 0.5 * xywh[3], xywh[2], xywh[3]);
}

std::optional<Box> clip_box(const Box& b, double width, double height) {
  const double x1 = std::clamp(b.x1(), 0.0, width);
  const double y1 = std::clamp(b.y1(), 0.0, height);
  const double x2 = std::clamp(b.x2(), 0.0, width);
  const double y2 = std::clamp(b.y2(), 0.0, height);
  if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0) return std::nullopt;
  return Box::from_corners(x1, y1, x2, y2);
}

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::min(1.0, inter / uni);
}

BoxDelta encode(const Box& anchor, const Box& target) {
  return BoxDelta{(target.cx - anchor.cx) / anchor.w, (target.cy - anchor.cy) / anchor.h,
                  std::log(target.w / anchor.w), std::log(target.h / anchor.h)};
}

Box decode(const Box& anchor, const BoxDelta& delta, const DecodeOptions& options) {
  double tw = delta.tw;
  double th = delta.th;
  if (!std::isfinite(delta.tx) || !std::isfinite(delta.ty) || !std::isfinite(tw) ||
      !std::isfinite(th)) {
    throw std::invalid_argument("decode: non-finite delta");
  }
  if (options.clamp_log_scale) {
    tw = std::clamp(tw, -kMaxLogScale, kMaxLogScale);
    th = std::clamp(th, -kMaxLogScale, kMaxLogScale);
  } else if (std::abs(tw) > kMaxLogScale || std::abs(th) > kMaxLogScale) {
    throw std::invalid_argument("decode: |tw| or |th| exceeds log(1000)");
  }
  return Box::make(delta.tx * anchor.w + anchor.cx, delta.ty * anchor.h + anchor.cy,
                   anchor.w * std::exp(tw), anchor.h * std::exp(th));
}

void AnchorConfig::validate() const {
  if (ratios.empty()) throw std::invalid_argument("anchor ratios must be non-empty");
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("anchor ratios must be positive");
  }
  for (double s : scales) {
    if (!(s > 0.0)) throw std::invalid_argument("anchor scales must be positive");
  }
}

std::vector<Anchor> generate_anchors(std::span<const LevelShape> levels,
                                     const AnchorConfig& cfg) {
  cfg.validate();
  std::vector<Anchor> out;
  for (const LevelShape& lv : levels) {
    const auto scale_idx = static_cast<std::size_t>(lv.level - 2);
    if (lv.level < 2 || scale_idx >= cfg.scales.size()) {
      throw std::invalid_argument("no anchor scale configured for level " +
                                  std::to_string(lv.level));
    }
    const double s = cfg.scales[scale_idx];
    for (int y = 0; y < lv.height; ++y) {
      for (int x = 0; x < lv.width; ++x) {
        const double cx = (x + 0.5) * lv.stride;
        const double cy = (y + 0.5) * lv.stride;
        for (double rho : cfg.ratios) {
          const double root = std::sqrt(rho);
          out.push_back(Anchor{Box::make(cx, cy, s / root, s * root), lv.level, out.size()});
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold, double score_threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: boxes and scores differ in length");
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (scores[i] >= score_threshold) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(order.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (suppressed[i]) continue;
    const Box& top = boxes[order[i]];
    kept.push_back(order[i]);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (!suppressed[j] && iou(top, boxes[order[j]]) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

}  // namespace attnmask
