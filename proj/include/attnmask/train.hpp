#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attnmask/metrics.hpp"
#include "attnmask/model.hpp"

namespace attnmask {

struct TrainConfig {
  double lr = 0.002;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 26;
  int batch_size = 2;
  // lr is multiplied by gamma at the start of each listed (0-based) epoch.
  std::vector<int> step_epochs{16, 22};
  double gamma = 0.1;
  // 0 means one pass over the data per epoch.
  int steps_per_epoch = 0;
  bool hflip = true;
  std::uint64_t seed = 0;

  void validate() const;
};

double learning_rate(const TrainConfig& cfg, int epoch);

struct TrainRecord {
  int step = 0;
  int epoch = 0;
  double l_cls = 0.0;
  double l_reg = 0.0;
  double l_mask = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
};

// SGD with momentum, v = mu v + (g + wd w), w -= lr v.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(ParamStore& params, const std::vector<Tensor>& grads, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

using TrainCallback = std::function<void(const TrainRecord&)>;

// Throws std::domain_error if any loss or gradient is non-finite.
std::vector<TrainRecord> train(Model& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                               const TrainCallback& on_step = {});

std::string trace_csv(const std::vector<TrainRecord>& trace);

struct EvalSet {
  std::vector<Detection> detections;
  std::vector<GtRecord> ground_truth;
};

// Runs inference on every sample; image ids are sample indices.
EvalSet collect_detections(const Model& model, const std::vector<Sample>& data,
                           double conf_threshold = 0.05);

}  // namespace attnmask
