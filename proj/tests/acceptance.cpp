// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   acceptance            all ten criteria
//   acceptance 2 3 5      a subset

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attnmask/attention.hpp"
#include "attnmask/box.hpp"
#include "attnmask/config.hpp"
#include "attnmask/gradient_suite.hpp"
#include "attnmask/losses.hpp"
#include "attnmask/metrics.hpp"
#include "attnmask/pipeline.hpp"
#include "attnmask/roi_align.hpp"
#include "attnmask/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace attnmask {
namespace {

using testing::random_tensor;

// Frozen from the reference smoke run (seed 1 reached mAP@0.5 = 0.766).
constexpr std::uint64_t kSmokeSeed = 1;
constexpr double kSmokeMap50Bar = 0.5;
constexpr std::uint64_t kCompareSeed = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Collects failed sub-checks; the criterion passes when none fail.
struct Checks {
  std::vector<std::string> failures;
  std::ostringstream info;

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  bool passed() const { return failures.empty(); }
};

using Criterion = std::function<void(Checks&)>;

// Gradient suites are shared between criteria 1 and 4.
const std::vector<GradSuiteEntry>& gradient_results(double* seconds = nullptr) {
  static double elapsed = 0.0;
  static const std::vector<GradSuiteEntry> results = [] {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_gradient_suite("all", GradSuiteOptions{});
    elapsed = seconds_since(t0);
    return r;
  }();
  if (seconds) *seconds = elapsed;
  return results;
}

void gradient_suite(Checks& c) {
  double secs = 0.0;
  const auto& results = gradient_results(&secs);
  const std::set<std::string> required{"cbam",     "se",       "eca",      "bottleneck_cbam", "fpn_fusion",
                                       "roi_align_max", "cls_loss", "reg_loss", "mask_loss"};
  std::set<std::string> seen;
  double worst = 0.0;
  for (const GradSuiteEntry& e : results) {
    seen.insert(e.name);
    worst = std::max(worst, e.max_rel_error);
    c.require(e.passed && e.max_rel_error < 1e-3, e.name + " max rel err " + std::to_string(e.max_rel_error));
    c.require(e.seeds >= 20, e.name + " ran " + std::to_string(e.seeds) + " seeds");
  }
  for (const auto& name : required) c.require(seen.count(name) > 0, "missing suite " + name);
  c.require(secs < 120.0, "runtime " + std::to_string(secs) + " s");
  c.info << results.size() << " suites x 20 seeds, worst rel err " << worst << ", " << secs << " s";
}

void closed_form_attention(Checks& c) {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int channels = 4 * rng.uniform_int(1, 8);
    const Tensor f = random_tensor({channels, rng.uniform_int(1, 12), rng.uniform_int(1, 12)}, rng, -10, 10);
    for (const auto& [variant, factor] : {std::pair{AttentionVariant::kCbam, 0.25},
                                          std::pair{AttentionVariant::kSe, 0.5},
                                          std::pair{AttentionVariant::kEca, 0.5}}) {
      ParamStore store;
      AttentionConfig cfg;
      cfg.channels = channels;
      cfg.reduction = 4;
      cfg.variant = variant;
      cfg.init = Init::kZero;
      const AttentionParams p = make_attention(store, "a", cfg, rng);
      Graph g(&store);
      const Tensor out = apply_attention(g, g.constant(f), p).value();
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double err = std::abs(out[i] - factor * f[i]);
        worst = std::max(worst, err / std::max(1.0, std::abs(f[i])));
      }
    }
  }
  c.require(worst <= 1e-15, "max deviation " + std::to_string(worst));
  c.info << "60 cases, max relative deviation " << worst;
}

void geometry(Checks& c) {
  Rng rng(11);
  auto random_box = [&rng](double extent) {
    return Box::make(rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(1, 40), rng.uniform(1, 40));
  };
  int nms_mismatch = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.uniform_int(0, 200);
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) {
      boxes.push_back(random_box(60.0));
      scores.push_back(std::round(rng.uniform(0, 1) * 20.0) / 20.0);
    }
    const double thr = rng.uniform(0.1, 0.9), score_thr = rng.uniform(0.0, 0.5);
    nms_mismatch += nms(boxes, scores, thr, score_thr) != oracle::brute_nms(boxes, scores, thr, score_thr);
  }
  c.require(nms_mismatch == 0, std::to_string(nms_mismatch) + " NMS mismatches");

  double worst_rt = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Box a = random_box(100.0), t = random_box(100.0);
    const Box back = decode(a, encode(a, t));
    for (auto [got, want] : {std::pair{back.cx, t.cx}, {back.cy, t.cy}, {back.w, t.w}, {back.h, t.h}})
      worst_rt = std::max(worst_rt, std::abs(got - want) / std::max(1e-12, std::abs(want)));
  }
  c.require(worst_rt < 1e-9, "round-trip rel err " + std::to_string(worst_rt));

  const double fixture = iou(Box::from_corners(0, 0, 10, 10), Box::from_coco({5, 5, 10, 10}));
  c.require(std::abs(fixture - 1.0 / 7.0) <= 1e-12, "IoU fixture " + std::to_string(fixture));

  const AnchorConfig cfg;
  const std::vector<LevelShape> levels{{2, 4, 16, 16}, {3, 8, 8, 8}, {4, 16, 4, 4}, {5, 32, 2, 2}, {6, 64, 1, 1}};
  const auto anchors = generate_anchors(levels, cfg);
  std::vector<std::size_t> per_level(7, 0);
  double worst_area = 0.0;
  for (const Anchor& a : anchors) {
    ++per_level[static_cast<std::size_t>(a.level)];
    const double s = cfg.scales[static_cast<std::size_t>(a.level - 2)];
    worst_area = std::max(worst_area, std::abs(a.box.area() - s * s) / (s * s));
  }
  for (const LevelShape& l : levels)
    c.require(per_level[static_cast<std::size_t>(l.level)] == 3u * l.height * l.width,
              "anchor count on P" + std::to_string(l.level));
  c.require(worst_area <= 1e-6, "anchor area rel err " + std::to_string(worst_area));
  c.info << "500 NMS instances, round-trip " << worst_rt << ", IoU " << fixture << ", anchor area " << worst_area;
}

void roi_align_checks(Checks& c) {
  Rng rng(13);
  double const_err = 0.0;
  for (auto agg : {RoiAggregation::kMax, RoiAggregation::kAvg}) {
    Graph g;
    const Tensor out =
        roi_align(g.constant(Tensor({2, 9, 11}, 3.25)), 4, Box::from_corners(3.3, 1.7, 29.0, 20.2), RoiAlignConfig{7, agg})
            .value();
    for (double v : out.data()) const_err = std::max(const_err, std::abs(v - 3.25));
  }
  // Bilinear weights sum to one only up to rounding.
  c.require(const_err <= 1e-14, "constant map deviation " + std::to_string(const_err));

  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(2, 9), w = rng.uniform_int(2, 9), stride = 1 << rng.uniform_int(0, 3);
    const Tensor f = random_tensor({2, h, w}, rng);
    const double x1 = rng.uniform(-0.3, 1.1) * w * stride, y1 = rng.uniform(-0.3, 1.1) * h * stride;
    const Box roi =
        Box::from_corners(x1, y1, x1 + rng.uniform(0.2, 1.0) * w * stride, y1 + rng.uniform(0.2, 1.0) * h * stride);
    const int p = rng.uniform_int(1, 7);
    const auto agg = rng.bernoulli(0.5) ? RoiAggregation::kMax : RoiAggregation::kAvg;
    Graph g;
    const Tensor got = roi_align(g.constant(f), stride, roi, RoiAlignConfig{p, agg}).value();
    worst = std::max(worst, testing::max_abs_diff(got, oracle::dense_roi_align(f, stride, roi, p, agg)));
  }
  c.require(worst < 1e-6, "dense oracle diff " + std::to_string(worst));

  int grad_suites = 0;
  for (const GradSuiteEntry& e : gradient_results())
    if (e.module == "roialign") {
      ++grad_suites;
      c.require(e.passed, e.name + " gradient check");
    }
  c.require(grad_suites > 0, "no ROI Align gradient suite");
  c.info << "constant map dev " << const_err << ", 200 random ROIs max diff " << worst << ", " << grad_suites << " gradient suites";
}

void metric_suite(Checks& c) {
  const Box sq = Box::from_corners(0, 0, 10, 10), far = Box::from_corners(50, 50, 60, 60);
  const std::vector<GtRecord> one_gt{{0, 1, sq, false}};
  const std::vector<double> t50{0.5};
  const std::vector<Detection> tp_first{{0, 1, sq, 0.9}, {0, 1, far, 0.8}}, fp_first{{0, 1, far, 0.9}, {0, 1, sq, 0.8}};
  const double ap_one = map_report(tp_first, one_gt, t50).thresholds[0].map;
  const double ap_half = map_report(fp_first, one_gt, t50).thresholds[0].map;
  c.require(ap_one == 1.0, "AP fixture 1.0 gave " + std::to_string(ap_one));
  c.require(ap_half == 0.5, "AP fixture 0.5 gave " + std::to_string(ap_half));

  Rng rng(17);
  std::vector<GtRecord> gts;
  std::vector<Detection> dets;
  for (int i = 0; i < 24; ++i) {
    const Box b = Box::make(rng.uniform(10, 90), rng.uniform(10, 90), rng.uniform(5, 30), rng.uniform(5, 30));
    gts.push_back({i % 4, 1 + i % 3, b, false});
    dets.push_back({i % 4, 1 + i % 3, b, rng.uniform(0.1, 1.0)});
  }
  const EvalReport perfect = map_report(dets, gts);
  c.require(perfect.map50 == 1.0 && perfect.map75 == 1.0 && perfect.map_coco == 1.0, "perfect predictions");

  double coco_gap = 0.0;
  int mismatches = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n_images = rng.uniform_int(1, 5), n_classes = rng.uniform_int(1, 3);
    gts.clear();
    dets.clear();
    const int n_gt = rng.uniform_int(1, 10);
    for (int i = 0; i < n_gt; ++i) {
      const Box b = Box::make(rng.uniform(10, 50), rng.uniform(10, 50), rng.uniform(5, 25), rng.uniform(5, 25));
      gts.push_back({rng.uniform_int(0, n_images - 1), rng.uniform_int(1, n_classes), b, false});
    }
    const int n_det = rng.uniform_int(0, 10);
    for (int i = 0; i < n_det; ++i) {
      if (rng.bernoulli(0.7)) {
        const GtRecord& g = gts[static_cast<std::size_t>(rng.uniform_int(0, n_gt - 1))];
        const Box b = Box::make(g.box.cx + rng.uniform(-4, 4), g.box.cy + rng.uniform(-4, 4),
                                g.box.w * rng.uniform(0.7, 1.3), g.box.h * rng.uniform(0.7, 1.3));
        dets.push_back({g.image_id, g.category_id, b, rng.uniform(0, 1)});
      } else {
        const Box b = Box::make(rng.uniform(10, 50), rng.uniform(10, 50), rng.uniform(5, 25), rng.uniform(5, 25));
        dets.push_back({rng.uniform_int(0, n_images - 1), rng.uniform_int(1, n_classes), b, rng.uniform(0, 1)});
      }
    }
    const EvalReport r = map_report(dets, gts);
    double sum = 0.0;
    for (const ThresholdResult& t : r.thresholds) {
      sum += t.map;
      const double d = std::abs(t.map - oracle::reference_map(dets, gts, t.iou_threshold));
      worst = std::max(worst, d);
      mismatches += d > 1e-9;
    }
    coco_gap = std::max(coco_gap, std::abs(*r.map_coco - sum / 10.0));
  }
  c.require(coco_gap <= 1e-12, "COCO mean gap " + std::to_string(coco_gap));
  c.require(mismatches == 0, std::to_string(mismatches) + " disagreements with reference evaluator");
  c.info << "fixtures exact, COCO mean gap " << coco_gap << ", reference max diff " << worst << " over 200 instances";
}

void loss_fixtures(Checks& c) {
  const double ln2 = std::log(2.0);
  c.require(std::abs(cls_loss(0.5, 1.0) - ln2) <= 1e-12 && std::abs(cls_loss(0.5, 0.0) - ln2) <= 1e-12,
            "classification loss at p = 0.5");
  c.require(smooth_l1(0.5) == 0.125 && smooth_l1(2.0) == 1.5, "smooth L1 fixtures");
  double jump = 0.0;
  for (double h : {1e-4, 1e-8, 1e-12})
    for (double s : {1.0, -1.0}) jump = std::max(jump, std::abs(smooth_l1(s * (1 + h)) - smooth_l1(s * (1 - h))));
  c.require(jump <= 2.1e-4, "smooth L1 jump at |d| = 1: " + std::to_string(jump));

  Rng rng(19);
  MaskTarget coarse, fine;
  coarse.size = 7;
  fine.size = 14;
  for (int i = 0; i < 49; ++i) {
    coarse.target.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    coarse.predicted.push_back(rng.uniform(0.01, 0.99));
  }
  for (int y = 0; y < 14; ++y)
    for (int x = 0; x < 14; ++x) {
      fine.target.push_back(coarse.target[static_cast<std::size_t>((y / 2) * 7 + x / 2)]);
      fine.predicted.push_back(coarse.predicted[static_cast<std::size_t>((y / 2) * 7 + x / 2)]);
    }
  const double refine_gap = std::abs(mask_loss(coarse) - mask_loss(fine));
  c.require(refine_gap <= 1e-12, "mask loss 7 -> 14 gap " + std::to_string(refine_gap));

  const std::vector<double> cls{ln2, ln2}, reg{0.125};
  const double total = total_loss(cls, reg, ln2, 2.0, 100.0).total;
  c.require(std::abs(total - 1.38754) <= 1e-5, "total loss " + std::to_string(total));
  c.info << "ln2 fixtures, smooth L1 0.125 / 1.5, mask refinement gap " << refine_gap << ", total " << total;
}

void schedule(Checks& c) {
  // Nominal schedule, one step per epoch so each record is one epoch.
  ExperimentConfig cfg = ExperimentConfig::smoke();
  cfg.train = TrainConfig{};
  cfg.train.steps_per_epoch = 1;
  cfg.train.batch_size = 1;
  cfg.data.n_train = 2;
  const auto data = make_split(cfg.data, 3).train;
  Model model(cfg.model, 3);
  const auto trace = train(model, data, cfg.train);
  c.require(trace.size() == 26u, "trace has " + std::to_string(trace.size()) + " records");
  std::set<double> distinct;
  for (const TrainRecord& r : trace) {
    distinct.insert(r.lr);
    const double want = r.epoch < 16 ? 0.002 : r.epoch < 22 ? 0.0002 : 0.00002;
    c.require(r.lr == want, "epoch " + std::to_string(r.epoch) + " lr " + std::to_string(r.lr));
  }
  c.require(distinct == std::set<double>{0.002, 0.0002, 0.00002}, "distinct lr values");
  c.info << "26 epochs, lr 0.002 until 15, 0.0002 from 16, 0.00002 from 22";
}

struct SmokeRuns {
  RunResult first;
  RunResult second;
  double first_wall = 0.0;
  bool finite_losses = true;
};

const SmokeRuns& smoke_runs() {
  static const SmokeRuns runs = [] {
    SmokeRuns r;
    const ExperimentConfig cfg = ExperimentConfig::smoke();
    auto check_finite = [&r](const TrainRecord& rec) { r.finite_losses = r.finite_losses && std::isfinite(rec.l_total); };
    auto t0 = std::chrono::steady_clock::now();
    r.first = run_experiment(cfg, kSmokeSeed, check_finite);
    r.first_wall = seconds_since(t0);
    r.second = run_experiment(cfg, kSmokeSeed, check_finite);
    return r;
  }();
  return runs;
}

bool same_params(const Model& a, const Model& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i)
    if (!(a.params().value(ParamId{i}) == b.params().value(ParamId{i}))) return false;
  return true;
}

void training_smoke(Checks& c) {
  // train() throws on the first non-finite gradient, so completing the run
  // covers the finiteness requirement.
  const SmokeRuns& r = smoke_runs();
  const LossDrop drop = loss_drop(r.first.trace);
  c.require(r.first.model->config().attention == AttentionVariant::kCbam, "smoke model is not CBAM");
  c.require(r.first_wall <= 600.0, "wall time " + std::to_string(r.first_wall) + " s");
  c.require(drop.halved(), "loss early " + std::to_string(drop.early) + " trailing " + std::to_string(drop.trailing));
  c.require(r.finite_losses, "non-finite loss");
  c.require(trace_csv(r.first.trace) == trace_csv(r.second.trace), "rerun trace differs");
  c.require(same_params(*r.first.model, *r.second.model), "rerun parameters differ");
  c.info << r.first.trace.size() << " steps in " << r.first_wall << " s, loss " << drop.early << " -> "
         << drop.trailing << ", rerun bit-identical";
}

void end_to_end(Checks& c) {
  const SmokeRuns& r = smoke_runs();
  const double map50 = r.first.report.map50.value_or(0.0);
  c.require(map50 >= kSmokeMap50Bar, "mAP@0.5 " + std::to_string(map50));
  c.require(r.first.train_hash != r.first.test_hash, "test split equals train split");
  c.info << "held-out mAP@0.5 " << map50 << " (bar " << kSmokeMap50Bar << ", seed " << kSmokeSeed << ")";
}

void compare_harness(Checks& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const CompareResult res = run_compare(ExperimentConfig::compare(), kCompareSeed);
  const double secs = seconds_since(t0);
  c.require(res.variants.size() == 4u && res.rows.size() == 4u, "expected four variants");
  c.require(std::set<AttentionVariant>(res.variants.begin(), res.variants.end()).size() == 4u, "duplicate variant");
  c.require(res.identical_data, "dataset hashes differ across variants");
  for (std::uint64_t h : res.dataset_hashes) c.require(h == res.dataset_hashes.front(), "dataset hash mismatch");
  for (const TableRow& row : res.rows)
    c.require(row.map50 && row.map75 && row.map_coco, row.model + " is missing a value");
  for (const TableRow& row : res.rows) c.require(res.table.find(row.model) != std::string::npos, row.model + " not in table");
  c.info << "4 variants on identical data in " << secs << " s\n" << res.table;
}

}  // namespace
}  // namespace attnmask

int main(int argc, char** argv) {
  using namespace attnmask;
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  app.add_option("criteria", only, "criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, Criterion>> criteria{
      {"gradient suite", gradient_suite},     {"closed-form attention", closed_form_attention},
      {"geometry oracles", geometry},         {"roi align", roi_align_checks},
      {"metric suite", metric_suite},         {"loss fixtures", loss_fixtures},
      {"lr schedule", schedule},              {"training smoke", training_smoke},
      {"end-to-end sanity", end_to_end},      {"compare harness", compare_harness},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    Checks c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.passed();
    failed += !ok;
    std::printf("%s %2d %-22s %6.1fs  %s\n", ok ? "PASS" : "FAIL", n, criteria[i].first, seconds_since(t0),
                c.info.str().c_str());
    for (const auto& f : c.failures) std::printf("       - %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
