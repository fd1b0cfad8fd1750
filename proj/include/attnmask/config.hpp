#pragma once

#include <cstdint>
#include <string>

#include "attnmask/model.hpp"
#include "attnmask/synth.hpp"
#include "attnmask/train.hpp"

namespace attnmask {

struct DataConfig {
  SynthSpec synth;
  int n_train = 64;
  int n_test = 32;
  // Detections below this score are not reported for self-evaluation.
  double eval_conf_threshold = 0.05;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  // Toy detector, ~300 SGD steps on synthetic shapes.
  static ExperimentConfig smoke();
  // Shorter schedule for running all four attention variants.
  static ExperimentConfig compare();

  void validate() const;
};

// Applies a JSON document {"model": {...}, "train": {...}, "data": {...}} on
// top of base. Every key is optional; unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const ExperimentConfig& base = ExperimentConfig::smoke());
ExperimentConfig load_experiment_config(const std::string& path,
                                        const ExperimentConfig& base = ExperimentConfig::smoke());
std::string to_json(const ExperimentConfig& cfg);

// Train and held-out splits drawn from one stream so they never share samples.
struct DataSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
};
DataSplit make_split(const DataConfig& cfg, std::uint64_t seed);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace attnmask
