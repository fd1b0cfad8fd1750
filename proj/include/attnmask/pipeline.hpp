#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "attnmask/config.hpp"
#include "attnmask/metrics.hpp"
#include "attnmask/model.hpp"
#include "attnmask/train.hpp"

namespace attnmask {

struct RunResult {
  std::unique_ptr<Model> model;
  std::vector<TrainRecord> trace;
  EvalSet eval;  // held-out split
  EvalReport report;
  std::uint64_t train_hash = 0;
  std::uint64_t test_hash = 0;
  double train_seconds = 0.0;
};

// Synthesizes the split, builds and trains the model, then evaluates on the
// held-out split. seed drives data, initialization and sampling.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const TrainCallback& on_step = {});

// Mean total loss over [first, last) steps of the trace, clipped to its length.
double mean_loss(const std::vector<TrainRecord>& trace, std::size_t first, std::size_t last);

struct LossDrop {
  double early = 0.0;     // steps 10..59
  double trailing = 0.0;  // last 50 steps
  bool halved() const { return trailing <= 0.5 * early; }
};
LossDrop loss_drop(const std::vector<TrainRecord>& trace);

// "Mask RCNN", "Mask RCNN + ECA", "Mask RCNN + SE", "Mask RCNN + CBAM".
std::string variant_label(AttentionVariant v);

struct CompareResult {
  std::vector<AttentionVariant> variants;
  std::vector<TableRow> rows;
  std::vector<std::uint64_t> dataset_hashes;  // train and test hash combined, per variant
  bool identical_data = false;
  std::string table;
};

// Trains every variant on the same data and seed, in table order.
CompareResult run_compare(const ExperimentConfig& cfg, std::uint64_t seed,
                          const std::function<void(AttentionVariant, const TrainRecord&)>& on_step = {});

// Writes config.json, checkpoint.bin, loss.csv, ground_truth.json,
// detections.json, eval.json and table.md into dir (created if missing).
void write_run_artifacts(const RunResult& run, const ExperimentConfig& cfg, const std::string& dir);

}  // namespace attnmask
