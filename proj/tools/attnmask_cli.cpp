// attnmask command line: evaluate, train-toy, compare, gradcheck.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "attnmask/coco_io.hpp"
#include "attnmask/gradient_suite.hpp"
#include "attnmask/pipeline.hpp"
#include "json.hpp"

using namespace attnmask;

namespace {

// ATTNMASK_SEED beats --seed, which beats the config file.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t config_seed) {
  if (const char* env = std::getenv("ATTNMASK_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw std::invalid_argument(std::string("ATTNMASK_SEED: not an integer: ") + env);
    return v;
  }
  return flag.value_or(config_seed);
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  return path.empty() ? base : load_experiment_config(path, base);
}

int cmd_evaluate(const std::string& gt_path, const std::string& det_path, const std::string& thresholds,
                 const std::string& out_path, const std::string& name) {
  const CocoGroundTruth gt = parse_coco_gt(read_text_file(gt_path));
  const std::vector<Detection> dets = parse_coco_detections(read_text_file(det_path), gt);
  const std::vector<double> thr = parse_thresholds(thresholds);
  const EvalReport report = map_report(dets, gt.annotations, thr);
  const TableRow row = table_row(name, report);
  std::cout << format_results_table(std::span(&row, 1));
  if (!out_path.empty()) write_text_file(out_path, eval_report_json(report));
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& attention,
              const std::optional<std::uint64_t>& seed_flag, const std::string& out_dir, bool quiet) {
  ExperimentConfig cfg = load_config(config_path, ExperimentConfig::smoke());
  if (!attention.empty()) cfg.model.attention = parse_attention_variant(attention);
  const std::uint64_t seed = resolve_seed(seed_flag, cfg.train.seed);
  cfg.train.seed = seed;
  const RunResult run = run_experiment(cfg, seed, [&](const TrainRecord& r) {
    if (!quiet && r.step % 25 == 0) {
      std::fprintf(stderr, "step %4d epoch %2d loss %.4f (cls %.4f reg %.4f mask %.4f) lr %g\n", r.step, r.epoch,
                   r.l_total, r.l_cls, r.l_reg, r.l_mask, r.lr);
    }
  });
  write_run_artifacts(run, cfg, out_dir);
  const LossDrop drop = loss_drop(run.trace);
  if (run.trace.size() >= 60) {
    std::printf("steps %zu, %.1f s, early loss %.4f, trailing loss %.4f\n", run.trace.size(), run.train_seconds,
                drop.early, drop.trailing);
  } else {
    // The early window covers steps 10..59.
    std::printf("steps %zu, %.1f s, too short for loss windows\n", run.trace.size(), run.train_seconds);
  }
  const TableRow row = table_row(variant_label(cfg.model.attention), run.report);
  std::cout << format_results_table(std::span(&row, 1));
  return 0;
}

int cmd_compare(const std::string& config_path, const std::optional<std::uint64_t>& seed_flag,
                const std::string& out_dir, bool quiet) {
  ExperimentConfig cfg = load_config(config_path, ExperimentConfig::compare());
  const std::uint64_t seed = resolve_seed(seed_flag, cfg.train.seed);
  cfg.train.seed = seed;
  const CompareResult result = run_compare(cfg, seed, [&](AttentionVariant v, const TrainRecord& r) {
    if (!quiet && r.step % 25 == 0) {
      std::fprintf(stderr, "[%s] step %4d loss %.4f\n", std::string(to_string(v)).c_str(), r.step, r.l_total);
    }
  });
  if (!result.identical_data) {
    std::cerr << "error: variants saw different datasets\n";
    return 1;
  }
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path root(out_dir);
  write_text_file((root / "config.json").string(), to_json(cfg));
  write_text_file((root / "table.md").string(), result.table);
  nlohmann::json doc;
  doc["seed"] = seed;
  doc["dataset_hash"] = result.dataset_hashes.front();
  doc["rows"] = nlohmann::json::array();
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const TableRow& r = result.rows[i];
    doc["rows"].push_back({{"model", r.model},
                           {"attention", to_string(result.variants[i])},
                           {"map50", r.map50 ? nlohmann::json(*r.map50) : nlohmann::json(nullptr)},
                           {"map75", r.map75 ? nlohmann::json(*r.map75) : nlohmann::json(nullptr)},
                           {"map_coco", r.map_coco ? nlohmann::json(*r.map_coco) : nlohmann::json(nullptr)}});
  }
  write_text_file((root / "compare.json").string(), doc.dump(2) + "\n");
  std::cout << result.table;
  return 0;
}

int cmd_gradcheck(const std::string& module, int seeds) {
  GradSuiteOptions opts;
  opts.seeds = seeds;
  bool ok = true;
  for (const auto& e : run_gradient_suite(module, opts)) {
    std::printf("%-5s %-10s %-16s seeds=%d checked=%zu skipped=%zu max_rel_err=%.3e\n", e.passed ? "PASS" : "FAIL",
                e.module.c_str(), e.name.c_str(), e.seeds, e.checks, e.skipped, e.max_rel_error);
    ok = ok && e.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-augmented Mask R-CNN toolkit"};
  app.require_subcommand(1);

  auto* eval = app.add_subcommand("evaluate", "COCO-style mAP for a detection file");
  std::string gt_path, det_path, thresholds = "0.5,0.75,coco", eval_out, eval_name = "model";
  eval->add_option("--gt", gt_path, "ground truth COCO JSON")->required();
  eval->add_option("--det", det_path, "detections JSON array")->required();
  eval->add_option("--thresholds", thresholds, "comma list of IoU thresholds; 'coco' = 0.50:0.05:0.95");
  eval->add_option("--out", eval_out, "report JSON path");
  eval->add_option("--name", eval_name, "row label in the printed table");

  auto* tt = app.add_subcommand("train-toy", "train the toy detector on synthetic shapes");
  std::string train_config, attention, train_out;
  std::optional<std::uint64_t> train_seed;
  bool quiet = false;
  tt->add_option("--config", train_config, "JSON overrides");
  tt->add_option("--attention", attention, "none|se|eca|cbam")->check(CLI::IsMember({"none", "se", "eca", "cbam"}));
  tt->add_option("--seed", train_seed);
  tt->add_option("--out", train_out)->required();
  tt->add_flag("--quiet", quiet);

  auto* cmp = app.add_subcommand("compare", "train all four variants on identical data");
  std::string cmp_config, cmp_out;
  std::optional<std::uint64_t> cmp_seed;
  cmp->add_option("--config", cmp_config, "JSON overrides");
  cmp->add_option("--seed", cmp_seed);
  cmp->add_option("--out", cmp_out)->required();
  cmp->add_flag("--quiet", quiet);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  std::string module = "all";
  int seeds = 20;
  gc->add_option("--module", module)->check(CLI::IsMember({"all", "attention", "losses", "roialign", "backbone"}));
  gc->add_option("--seeds", seeds)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*eval) return cmd_evaluate(gt_path, det_path, thresholds, eval_out, eval_name);
    if (*tt) return cmd_train(train_config, attention, train_seed, train_out, quiet);
    if (*cmp) return cmd_compare(cmp_config, cmp_seed, cmp_out, quiet);
    if (*gc) return cmd_gradcheck(module, seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
