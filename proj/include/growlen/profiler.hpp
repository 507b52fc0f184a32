#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "growlen/model.hpp"

namespace growlen {

// Closed-form count of live 32-bit values at the peak of one training
// step: parameters, optimizer moments, gradients, and activations saved
// for backward. The attention term is the quadratic-in-seq_len component.
struct MemoryEstimate {
  int64_t parameters = 0;
  int64_t optimizer_moments = 0;  // 2x parameters
  int64_t gradients = 0;          // 1x parameters
  int64_t activations_linear = 0;
  int64_t activations_attention = 0;  // layers * heads * batch * T^2

  int64_t total() const {
    return parameters + optimizer_moments + gradients + activations_linear + activations_attention;
  }
  // per-sequence activation cost; total() is affine in batch_size
  int64_t activations() const { return activations_linear + activations_attention; }
};

MemoryEstimate estimate_memory(const ModelConfig& config, int seq_len, int batch_size);

// Largest token count processable in one step under a value-count budget:
// seq_len * max{B >= 1 : estimate_memory(config, seq_len, B).total() <= budget}.
int64_t max_tokens_at_capacity(const ModelConfig& config, int seq_len, int64_t memory_budget_values);

struct StepProfile {
  int seq_len = 0;
  int batch_size = 0;
  int64_t tokens = 0;
  double wall_time_s = 0.0;  // median over trials, warmup excluded
  int64_t est_memory_values = 0;
};

// Times full train steps (forward, backward, optimizer update) on a
// synthetic corpus at batch_size = tokens_per_batch / seq_len.
StepProfile profile_step_time(const ModelConfig& config, int seq_len, int64_t tokens_per_batch,
                              int trials);

struct ProfileReport {
  std::vector<StepProfile> rows;
  std::vector<double> time_ratio_pct;    // normalized to the longest length
  std::vector<double> memory_ratio_pct;  // likewise
  std::vector<int64_t> tokens_at_capacity;  // empty unless a budget was given

  std::string to_csv() const;
};

// Ratio columns normalized so the longest profiled length reads 100%.
// A capacity budget (in values) adds the tokens-at-capacity column.
ProfileReport report(const std::vector<StepProfile>& profiles, int64_t capacity_budget_values = 0,
                     const ModelConfig* config = nullptr);

}  // namespace growlen
