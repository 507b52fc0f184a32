#include <cmath>

#include "doctest.h"
#include "growlen/profiler.hpp"

using namespace growlen;

TEST_CASE("doubling the batch doubles activations and nothing else") {
  const ModelConfig cfg = ModelConfig::small();
  const MemoryEstimate one = estimate_memory(cfg, 64, 4);
  const MemoryEstimate two = estimate_memory(cfg, 64, 8);
  CHECK(two.activations_linear == 2 * one.activations_linear);
  CHECK(two.activations_attention == 2 * one.activations_attention);
  CHECK(two.parameters == one.parameters);
  CHECK(two.optimizer_moments == one.optimizer_moments);
  CHECK(two.gradients == one.gradients);
}

TEST_CASE("doubling seq_len at fixed batch quadruples the attention term") {
  const ModelConfig cfg = ModelConfig::small();
  const MemoryEstimate a = estimate_memory(cfg, 64, 4);
  const MemoryEstimate b = estimate_memory(cfg, 128, 4);
  CHECK(b.activations_attention == 4 * a.activations_attention);
}

TEST_CASE("tiny-config estimate matches a hand enumeration") {
  // 1 layer, d=16, ffn 64, vocab 11, heads 1, T=4, B=1 (n = 4 rows)
  const ModelConfig cfg = ModelConfig::tiny(11, 0);
  const MemoryEstimate e = estimate_memory(cfg, 4, 1);

  const int64_t params = param_count(cfg);
  CHECK(e.parameters == params);
  CHECK(e.optimizer_moments == 2 * params);
  CHECK(e.gradients == params);

  // embedding 4*16; layer: ln1 out+xhat 2*64, q/k/v 3*64, rotated q/k 2*64,
  // head out + concat 2*64, o proj + residual 2*64, ln2 out+xhat 2*64,
  // ffn hidden pre/post 2*4*64, ffn out + residual 2*64; final ln 2*64;
  // logits + probs 2*4*11
  const int64_t n = 4 * 16;
  const int64_t per_layer = 13 * n + 2 * 4 * 64;
  const int64_t linear = n + per_layer + 2 * n + 2 * 4 * 11;
  CHECK(e.activations_linear == linear);
  CHECK(e.activations_attention == 1 * 1 * 1 * 4 * 4);
}

TEST_CASE("capacity boundary: budget for exactly one sequence returns seq_len") {
  const ModelConfig cfg = ModelConfig::small();
  const MemoryEstimate one = estimate_memory(cfg, 32, 1);
  CHECK(max_tokens_at_capacity(cfg, 32, one.total()) == 32);
  CHECK_THROWS_AS(max_tokens_at_capacity(cfg, 32, one.total() - 1), CapacityError);
}

TEST_CASE("tokens at capacity match brute force and never increase with length") {
  const ModelConfig cfg = ModelConfig::small();
  const int64_t budget = 8 << 20;
  int64_t prev = -1;
  for (int seq_len : {32, 64, 128, 256, 512}) {
    const int64_t fast = max_tokens_at_capacity(cfg, seq_len, budget);
    // brute force over batch sizes
    int64_t best = 0;
    for (int b = 1;; ++b) {
      if (estimate_memory(cfg, seq_len, b).total() > budget) break;
      best = static_cast<int64_t>(b) * seq_len;
    }
    CHECK(fast == best);
    if (prev >= 0) CHECK(fast <= prev);
    prev = fast;
  }
}

TEST_CASE("report ratios normalize to the longest length") {
  std::vector<StepProfile> rows;
  for (int i = 0; i < 4; ++i) {
    StepProfile p;
    p.seq_len = 32 << i;
    p.batch_size = 64 >> i;
    p.tokens = 2048;
    p.wall_time_s = 0.1 * (i + 1);  // synthetic linear sweep
    p.est_memory_values = 1000 * (i + 1);
    rows.push_back(p);
  }
  const ProfileReport rep = report(rows);
  CHECK(rep.time_ratio_pct[3] == doctest::Approx(100.0));
  CHECK(rep.time_ratio_pct[0] == doctest::Approx(25.0));
  CHECK(rep.time_ratio_pct[1] == doctest::Approx(50.0));
  CHECK(rep.memory_ratio_pct[2] == doctest::Approx(75.0));
  const std::string csv = rep.to_csv();
  CHECK(csv.find("seq_len,batch_size,tokens,wall_time_s,time_ratio_pct") != std::string::npos);
}

TEST_CASE("single-row report is its own anchor") {
  StepProfile p;
  p.seq_len = 64;
  p.batch_size = 8;
  p.tokens = 512;
  p.wall_time_s = 0.25;
  p.est_memory_values = 123;
  const ProfileReport rep = report({p});
  CHECK(rep.time_ratio_pct[0] == doctest::Approx(100.0));
  CHECK(rep.memory_ratio_pct[0] == doctest::Approx(100.0));
}

TEST_CASE("capacity column appears when a budget is supplied") {
  const ModelConfig cfg = ModelConfig::small();
  StepProfile p;
  p.seq_len = 64;
  p.batch_size = 8;
  p.tokens = 512;
  p.wall_time_s = 0.25;
  p.est_memory_values = estimate_memory(cfg, 64, 8).total();
  const ProfileReport rep = report({p}, 8 << 20, &cfg);
  REQUIRE(rep.tokens_at_capacity.size() == 1);
  CHECK(rep.tokens_at_capacity[0] == max_tokens_at_capacity(cfg, 64, 8 << 20));
  CHECK(rep.to_csv().find("tokens_at_capacity") != std::string::npos);
}

TEST_CASE("profile rows carry the exact token-constant packing") {
  const ModelConfig cfg = ModelConfig::tiny(256, 0);
  const StepProfile p = profile_step_time(cfg, 32, 512, 3);
  CHECK(p.tokens == 512);
  CHECK(p.batch_size == 16);
  CHECK(p.wall_time_s > 0);
  CHECK_THROWS_AS(profile_step_time(cfg, 32, 512, 2), ConfigError);
  CHECK_THROWS_AS(profile_step_time(cfg, 48, 512, 3), ConfigError);
}

TEST_CASE("repeated profiling medians stay within the stability band") {
  const ModelConfig cfg = ModelConfig::tiny(256, 0);
  const StepProfile a = profile_step_time(cfg, 64, 1024, 5);
  const StepProfile b = profile_step_time(cfg, 64, 1024, 5);
  const double ratio = a.wall_time_s / b.wall_time_s;
  CHECK(ratio > 0.75);
  CHECK(ratio < 1.3333);
}
