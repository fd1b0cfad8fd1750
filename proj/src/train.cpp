#include "attnmask/train.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "attnmask/ops.hpp"

namespace attnmask {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("train: epochs and batch_size must be >= 1");
  if (steps_per_epoch < 0) throw std::invalid_argument("train: steps_per_epoch must be >= 0");
  for (int e : step_epochs) {
    if (e < 1 || e >= epochs) throw std::invalid_argument("train: step epochs must lie in [1, epochs)");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("train: gamma must be positive");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int e : cfg.step_epochs) {
    if (epoch >= e) lr *= cfg.gamma;
  }
  return lr;
}

void Sgd::step(ParamStore& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params.size()) throw std::invalid_argument("sgd: gradient count mismatch");
  if (velocity_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) velocity_.emplace_back(params.value(ParamId{i}).shape(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params.value(ParamId{i}).data();
    auto v = velocity_[i].data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum_ * v[k] + g[k] + weight_decay_ * w[k];
      w[k] -= lr * v[k];
    }
  }
}

std::vector<TrainRecord> train(Model& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                               const TrainCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  Rng rng(cfg.seed);
  Sgd sgd(cfg.momentum, cfg.weight_decay);
  const int per_epoch = cfg.steps_per_epoch > 0
                            ? cfg.steps_per_epoch
                            : static_cast<int>((data.size() + cfg.batch_size - 1) / cfg.batch_size);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<TrainRecord> trace;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (int s = 0; s < per_epoch; ++s) {
      Graph g(&model.params());
      std::vector<Var> totals;
      TrainRecord rec{step, epoch, 0, 0, 0, 0, lr};
      for (int b = 0; b < cfg.batch_size; ++b) {
        if (cursor >= order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        const Sample& raw = data[order[cursor++]];
        const bool flip = cfg.hflip && rng.bernoulli(0.5);
        const StepLoss l = flip ? model.loss(g, augment(raw, AugmentOp::kHFlip), rng)
                                : model.loss(g, raw, rng);
        totals.push_back(l.total);
        rec.l_cls += l.report.l_cls / cfg.batch_size;
        rec.l_reg += l.report.l_reg / cfg.batch_size;
        rec.l_mask += l.report.l_mask / cfg.batch_size;
      }
      Var total = ops::scale(ops::add_n(totals), 1.0 / cfg.batch_size);
      rec.l_total = total.value().item();
      g.backward(total);
      std::vector<Tensor> grads = g.param_grads();
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].all_finite()) {
          throw std::domain_error("non-finite gradient for " + model.params().name(ParamId{i}) +
                                  " at step " + std::to_string(step));
        }
      }
      sgd.step(model.params(), grads, lr);
      trace.push_back(rec);
      if (on_step) on_step(rec);
      ++step;
    }
  }
  return trace;
}

std::string trace_csv(const std::vector<TrainRecord>& trace) {
  std::ostringstream os;
  os << "step,epoch,l_cls,l_reg,l_mask,l_total,lr\n";
  char line[256];
  for (const auto& r : trace) {
    std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.epoch, r.l_cls,
                  r.l_reg, r.l_mask, r.l_total, r.lr);
    os << line;
  }
  return os.str();
}

EvalSet collect_detections(const Model& model, const std::vector<Sample>& data, double conf_threshold) {
  EvalSet set;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto id = static_cast<std::int64_t>(i);
    for (const auto& d : model.infer(data[i].image, conf_threshold)) {
      set.detections.push_back(Detection{id, d.category_id, d.box, d.score});
    }
    for (std::size_t k = 0; k < data[i].boxes.size(); ++k) {
      set.ground_truth.push_back(GtRecord{id, data[i].classes[k], data[i].boxes[k], false});
    }
  }
  return set;
}

}  // namespace attnmask
