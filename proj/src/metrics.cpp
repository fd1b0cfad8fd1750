#include "attnmask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "attnmask/tensor.hpp"

namespace attnmask {

MatchResult match(std::span<const Detection> dets, std::span<const GtRecord> gts,
                  double iou_threshold) {
  MatchResult r;
  r.order.resize(dets.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  std::vector<bool> taken(gts.size(), false);
  for (const auto& g : gts) r.n_gt += g.iscrowd ? 0 : 1;

  for (std::size_t d : r.order) {
    double best_iou = -1.0;
    std::optional<std::size_t> best;
    // Non-crowd candidates first so they win ties against crowd regions.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (gts[j].iscrowd != (pass == 1)) continue;
        if (!gts[j].iscrowd && taken[j]) continue;
        const double v = iou(dets[d].box, gts[j].box);
        if (v > best_iou) {
          best_iou = v;
          best = j;
        }
      }
    }
    if (best && best_iou >= iou_threshold) {
      if (gts[*best].iscrowd) {
        r.flags.push_back(MatchFlag::kIgnored);
      } else {
        taken[*best] = true;
        r.flags.push_back(MatchFlag::kTruePositive);
      }
    } else {
      r.flags.push_back(MatchFlag::kFalsePositive);
    }
  }
  int matched = 0;
  for (std::size_t j = 0; j < gts.size(); ++j) matched += taken[j] ? 1 : 0;
  r.unmatched_gt = r.n_gt - matched;
  return r;
}

PrCurve pr_curve(const std::vector<bool>& tp_flags, int n_gt) {
  if (n_gt < 0) throw std::invalid_argument("pr_curve: negative GT count");
  PrCurve c;
  c.n_gt = n_gt;
  int tp = 0, fp = 0;
  for (bool f : tp_flags) {
    (f ? tp : fp) += 1;
    c.precision.push_back(static_cast<double>(tp) / (tp + fp));
    c.recall.push_back(n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0);
  }
  return c;
}

double average_precision(const PrCurve& curve, ApMethod method) {
  if (curve.n_gt <= 0 || curve.precision.empty()) return 0.0;
  std::vector<double> env = curve.precision;
  for (std::size_t i = env.size() - 1; i-- > 0;) env[i] = std::max(env[i], env[i + 1]);

  if (method == ApMethod::kTrapezoid) {
    // Area under the envelope as a function of recall, starting from
    // (0, env[0]).
    double area = 0.0;
    double prev_r = 0.0, prev_p = env[0];
    for (std::size_t i = 0; i < env.size(); ++i) {
      area += (curve.recall[i] - prev_r) * 0.5 * (env[i] + prev_p);
      prev_r = curve.recall[i];
      prev_p = env[i];
    }
    return std::clamp(area, 0.0, 1.0);
  }

  std::vector<double> sampled(101, 0.0);
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    auto it = std::lower_bound(curve.recall.begin(), curve.recall.end(), r);
    if (it != curve.recall.end()) {
      sampled[static_cast<std::size_t>(k)] = env[static_cast<std::size_t>(it - curve.recall.begin())];
    }
  }
  return pairwise_sum(sampled) / 101.0;
}

const ThresholdResult* EvalReport::at(double iou_threshold) const {
  for (const auto& t : thresholds) {
    if (std::abs(t.iou_threshold - iou_threshold) < 1e-12) return &t;
  }
  return nullptr;
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

namespace {

struct Group {
  std::vector<Detection> dets;
  std::vector<GtRecord> gts;
};

struct Scored {
  double score;
  std::int64_t image_id;
  std::size_t rank;  // position within its image's visit order
  bool tp;
};

}  // namespace

EvalReport map_report(std::span<const Detection> dets, std::span<const GtRecord> gts,
                      std::span<const double> thresholds, const EvalOptions& options) {
  // (category, image) -> group; std::map gives canonical iteration order.
  std::map<std::pair<int, std::int64_t>, Group> groups;
  std::map<int, int> gt_per_class;
  for (const auto& g : gts) {
    groups[{g.category_id, g.image_id}].gts.push_back(g);
    if (!g.iscrowd) gt_per_class[g.category_id] += 1;
  }
  for (const auto& d : dets) {
    if (!std::isfinite(d.score)) throw std::invalid_argument("detection score must be finite");
    groups[{d.category_id, d.image_id}].dets.push_back(d);
  }
  for (auto& [key, grp] : groups) {
    if (grp.dets.size() > options.max_dets) {
      std::stable_sort(grp.dets.begin(), grp.dets.end(),
                       [](const Detection& a, const Detection& b) { return a.score > b.score; });
      grp.dets.resize(options.max_dets);
    }
  }

  EvalReport report;
  for (double thr : thresholds) {
    ThresholdResult tr;
    tr.iou_threshold = thr;
    std::map<int, std::vector<Scored>> per_class;
    for (const auto& [key, grp] : groups) {
      const MatchResult m = match(grp.dets, grp.gts, thr);
      auto& bucket = per_class[key.first];
      for (std::size_t k = 0; k < m.order.size(); ++k) {
        if (m.flags[k] == MatchFlag::kIgnored) continue;
        bucket.push_back(Scored{grp.dets[m.order[k]].score, key.second, k,
                                m.flags[k] == MatchFlag::kTruePositive});
      }
    }
    std::vector<double> aps;
    for (const auto& [cat, n_gt] : gt_per_class) {
      std::vector<Scored> scored = per_class[cat];
      std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.rank < b.rank;
      });
      std::vector<bool> flags;
      ClassResult cr;
      cr.category_id = cat;
      for (const auto& s : scored) {
        flags.push_back(s.tp);
        (s.tp ? cr.tp : cr.fp) += 1;
      }
      cr.fn = n_gt - cr.tp;
      cr.curve = pr_curve(flags, n_gt);
      cr.ap = average_precision(cr.curve, options.method);
      aps.push_back(cr.ap);
      tr.tp += cr.tp;
      tr.fp += cr.fp;
      tr.fn += cr.fn;
      tr.classes.push_back(std::move(cr));
    }
    // Detections of classes without GT still count as false positives.
    for (const auto& [cat, scored] : per_class) {
      if (!gt_per_class.count(cat)) tr.fp += static_cast<int>(scored.size());
    }
    tr.map = aps.empty() ? 0.0 : pairwise_sum(aps) / static_cast<double>(aps.size());
    report.thresholds.push_back(std::move(tr));
  }

  if (const auto* t = report.at(0.5)) report.map50 = t->map;
  if (const auto* t = report.at(0.75)) report.map75 = t->map;
  std::vector<double> sweep;
  for (double thr : coco_thresholds()) {
    if (const auto* t = report.at(thr)) sweep.push_back(t->map);
  }
  if (sweep.size() == 10) report.map_coco = pairwise_sum(sweep) / 10.0;
  return report;
}

EvalReport map_report(std::span<const Detection> dets, std::span<const GtRecord> gts,
                      const EvalOptions& options) {
  const std::vector<double> thresholds = coco_thresholds();
  return map_report(dets, gts, thresholds, options);
}

TableRow table_row(const std::string& model, const EvalReport& report) {
  return TableRow{model, report.map50, report.map75, report.map_coco};
}

std::string format_results_table(std::span<const TableRow> rows) {
  std::size_t name_w = 5;
  for (const auto& r : rows) name_w = std::max(name_w, r.model.size());
  std::ostringstream os;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  auto cell = [&](const std::optional<double>& v, std::size_t w) {
    char buf[32];
    if (v) {
      std::snprintf(buf, sizeof(buf), "%.4f", *v);
    } else {
      std::snprintf(buf, sizeof(buf), "-");
    }
    return pad(buf, w);
  };
  os << "| " << pad("Model", name_w) << " | mAP^0.5 | mAP^0.75 | mAP^COCO |\n";
  os << "|" << std::string(name_w + 2, '-') << "|---------|----------|----------|\n";
  for (const auto& r : rows) {
    os << "| " << pad(r.model, name_w) << " | " << cell(r.map50, 7) << " | " << cell(r.map75, 8) << " | "
       << cell(r.map_coco, 8) << " |\n";
  }
  return os.str();
}

}  // namespace attnmask
