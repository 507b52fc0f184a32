#pragma once

#include <cstdint>
#include <vector>

#include "growlen/model.hpp"

namespace growlen {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
  double warmup_frac = 0.01;    // linear warmup over this fraction of total steps
  double min_lr_ratio = 0.1;    // cosine floor as a fraction of lr

  void validate() const;
};

// AdamW moments, one pair per parameter in ModelParams::visit order.
// Decay applies to 2-d weights only; gains and biases are exempt.
struct OptimizerState {
  int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  static OptimizerState init(const ModelParams& params);
};

// Warmup then cosine decay measured over the global step budget, so the
// learning-rate curve runs uninterrupted across stage transitions.
double lr_at(const OptimizerConfig& cfg, int64_t step, int64_t total_steps);

// Clip the global gradient norm to cfg.grad_clip; returns the pre-clip norm.
double clip_gradients(ModelParams& params, double max_norm);

// One AdamW update at the given learning rate; increments state.step.
void adamw_step(ModelParams& params, OptimizerState& state, const OptimizerConfig& cfg, double lr);

}  // namespace growlen
