#pragma once

// Slow reference implementations written independently of the library code
// paths they check. Shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "attnmask/box.hpp"
#include "attnmask/metrics.hpp"
#include "attnmask/roi_align.hpp"
#include "attnmask/tensor.hpp"

namespace attnmask::oracle {

inline double tent(double t) { return std::max(0.0, 1.0 - std::abs(t)); }

// Interpolant written as a sum of separable tents over every cell, with the
// half-cell border clamp and zero outside it.
inline double dense_sample(const Tensor& f, int c, double x, double y) {
  const int h = f.height(), w = f.width();
  if (x < -0.5 || x > w + 0.5 || y < -0.5 || y > h + 0.5) return 0.0;
  const double ax = std::clamp(x - 0.5, 0.0, w - 1.0), ay = std::clamp(y - 0.5, 0.0, h - 1.0);
  double v = 0.0;
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) v += f.at(c, j, i) * tent(ax - i) * tent(ay - j);
  return v;
}

inline Tensor dense_roi_align(const Tensor& f, int stride, const Box& roi, int p, RoiAggregation agg) {
  Tensor out({f.channels(), p, p});
  const double bw = roi.w / stride / p, bh = roi.h / stride / p;
  for (int c = 0; c < f.channels(); ++c)
    for (int by = 0; by < p; ++by)
      for (int bx = 0; bx < p; ++bx) {
        double mx = -INFINITY, sum = 0.0;
        for (double qy : {0.25, 0.75})
          for (double qx : {0.25, 0.75}) {
            const double v = dense_sample(f, c, roi.x1() / stride + (bx + qx) * bw, roi.y1() / stride + (by + qy) * bh);
            mx = std::max(mx, v);
            sum += v;
          }
        out.at(c, by, bx) = agg == RoiAggregation::kMax ? mx : sum / 4.0;
      }
  return out;
}

// Repeatedly take the best remaining candidate by linear scan, then discard
// everything overlapping it above the threshold.
inline std::vector<std::size_t> brute_nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                                          double thr, double score_thr) {
  std::set<std::size_t> remaining;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    if (scores[i] >= score_thr) remaining.insert(i);
  std::vector<std::size_t> kept;
  while (!remaining.empty()) {
    std::size_t best = *remaining.begin();
    for (std::size_t i : remaining)
      if (scores[i] > scores[best]) best = i;
    kept.push_back(best);
    std::set<std::size_t> next;
    for (std::size_t i : remaining)
      if (i != best && iou(boxes[best], boxes[i]) <= thr) next.insert(i);
    remaining = std::move(next);
  }
  return kept;
}

// All detections of a class sorted globally, each takes the best unmatched
// same-image GT, and the interpolated precision at recall r is the maximum
// precision over ranks reaching r. No crowd regions.
inline double reference_ap(const std::vector<Detection>& dets, const std::vector<GtRecord>& gts, int cls,
                           double thr) {
  std::vector<const Detection*> ds;
  for (const auto& d : dets)
    if (d.category_id == cls) ds.push_back(&d);
  std::stable_sort(ds.begin(), ds.end(), [](auto* a, auto* b) { return a->score > b->score; });
  std::vector<const GtRecord*> gs;
  for (const auto& g : gts)
    if (g.category_id == cls) gs.push_back(&g);
  std::vector<bool> used(gs.size(), false);
  std::vector<double> prec, rec;
  int tp = 0, fp = 0;
  for (const Detection* d : ds) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t j = 0; j < gs.size(); ++j) {
      if (used[j] || gs[j]->image_id != d->image_id) continue;
      const double v = iou(d->box, gs[j]->box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0 && best_iou >= thr) {
      used[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else {
      ++fp;
    }
    prec.push_back(static_cast<double>(tp) / (tp + fp));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(gs.size()));
  }
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) {
    double p = 0.0;
    for (std::size_t i = 0; i < prec.size(); ++i)
      if (rec[i] >= k / 100.0) p = std::max(p, prec[i]);
    total += p;
  }
  return total / 101.0;
}

inline double reference_map(const std::vector<Detection>& dets, const std::vector<GtRecord>& gts, double thr) {
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.category_id);
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  for (int c : classes) sum += reference_ap(dets, gts, c, thr);
  return sum / static_cast<double>(classes.size());
}

}  // namespace attnmask::oracle
