#include "growlen/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "growlen/corpusgen.hpp"
#include "growlen/data.hpp"
#include "growlen/trainer.hpp"

namespace growlen {

MemoryEstimate estimate_memory(const ModelConfig& config, int seq_len, int batch_size) {
  config.validate();
  if (seq_len < 1 || batch_size < 1)
    throw ConfigError("estimate_memory: seq_len and batch_size must be positive");

  const int64_t d = config.d_model;
  const int64_t f = config.ffn_dim();
  const int64_t v = config.vocab_size;
  const int64_t l = config.n_layers;
  const int64_t h = config.n_heads;
  const int64_t t = seq_len;
  const int64_t n = static_cast<int64_t>(batch_size) * t;  // rows in flight

  MemoryEstimate e;
  e.parameters = param_count(config);
  e.optimizer_moments = 2 * e.parameters;
  e.gradients = e.parameters;

  // Live forward activations, mirroring the implementation's saved set:
  //   embedding output                     n*d
  //   per layer:
  //     ln1 output + saved xhat            2*n*d
  //     q, k, v projections                3*n*d
  //     rotated q, k (saved)               2*n*d
  //     head outputs + concat              2*n*d
  //     output projection + residual       2*n*d
  //     ln2 output + saved xhat            2*n*d
  //     ffn hidden pre/post activation     2*n*f
  //     ffn output + residual              2*n*d
  //   final layer norm + xhat              2*n*d
  //   logits + softmax probabilities       2*n*v
  const int64_t per_layer = 13 * n * d + 2 * n * f;
  e.activations_linear = n * d + l * per_layer + 2 * n * d + 2 * n * v;
  e.activations_attention = l * h * static_cast<int64_t>(batch_size) * t * t;
  return e;
}

int64_t max_tokens_at_capacity(const ModelConfig& config, int seq_len,
                               int64_t memory_budget_values) {
  const MemoryEstimate one = estimate_memory(config, seq_len, 1);
  const int64_t fixed = one.parameters + one.optimizer_moments + one.gradients;
  const int64_t per_seq = one.activations();
  if (fixed + per_seq > memory_budget_values)
    throw CapacityError("budget of " + std::to_string(memory_budget_values) +
                        " values does not fit one sequence of " + std::to_string(seq_len) +
                        " (needs " + std::to_string(fixed + per_seq) + ")");
  const int64_t batches = (memory_budget_values - fixed) / per_seq;
  return batches * static_cast<int64_t>(seq_len);
}

StepProfile profile_step_time(const ModelConfig& config, int seq_len, int64_t tokens_per_batch,
                              int trials) {
  config.validate();
  if (trials < 3) throw ConfigError("profile: trials must be >= 3");
  if (tokens_per_batch % seq_len != 0)
    throw ConfigError("profile: tokens_per_batch " + std::to_string(tokens_per_batch) +
                      " not divisible by seq_len " + std::to_string(seq_len));

  // Self-contained rig: synthetic corpus, fresh parameters and optimizer.
  CorpusGenSpec spec;
  spec.size_bytes = static_cast<uint64_t>(std::max<int64_t>(tokens_per_batch * 4, 1 << 16));
  spec.seed = 0x70726f66;  // "prof"
  const Corpus corpus = corpus_from_bytes(generate_corpus(spec), config.vocab_size);

  ModelParams params = init(config);
  OptimizerState opt = OptimizerState::init(params);
  OptimizerConfig ocfg;
  const RopeTable table = build_table(config.rope, seq_len);
  ChunkLoader loader = make_loader(corpus, seq_len, tokens_per_batch, spec.seed);

  constexpr int kWarmup = 2;
  std::vector<double> times;
  times.reserve(static_cast<size_t>(trials));
  for (int i = 0; i < kWarmup + trials; ++i) {
    const Batch batch = loader.next_batch();
    const auto t0 = std::chrono::steady_clock::now();
    single_train_step(params, opt, ocfg, batch, table, ocfg.lr);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= kWarmup) times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const double median = times.size() % 2 == 1
                            ? times[times.size() / 2]
                            : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);

  StepProfile p;
  p.seq_len = seq_len;
  p.batch_size = static_cast<int>(tokens_per_batch / seq_len);
  p.tokens = tokens_per_batch;
  p.wall_time_s = median;
  p.est_memory_values = estimate_memory(config, seq_len, p.batch_size).total();
  return p;
}

ProfileReport report(const std::vector<StepProfile>& profiles, int64_t capacity_budget_values,
                     const ModelConfig* config) {
  if (profiles.empty()) throw ConfigError("report: empty sweep");
  ProfileReport rep;
  rep.rows = profiles;
  // normalization anchor: the longest profiled length
  size_t anchor = 0;
  for (size_t i = 1; i < profiles.size(); ++i)
    if (profiles[i].seq_len > profiles[anchor].seq_len) anchor = i;
  const double t_anchor = profiles[anchor].wall_time_s;
  const double m_anchor = static_cast<double>(profiles[anchor].est_memory_values);
  for (const auto& p : profiles) {
    rep.time_ratio_pct.push_back(100.0 * p.wall_time_s / t_anchor);
    rep.memory_ratio_pct.push_back(100.0 * static_cast<double>(p.est_memory_values) / m_anchor);
  }
  if (capacity_budget_values > 0) {
    if (config == nullptr) throw ConfigError("report: capacity column needs the model config");
    for (const auto& p : profiles)
      rep.tokens_at_capacity.push_back(max_tokens_at_capacity(*config, p.seq_len, capacity_budget_values));
  }
  return rep;
}

std::string ProfileReport::to_csv() const {
  std::string out = "seq_len,batch_size,tokens,wall_time_s,time_ratio_pct,est_memory_values,memory_ratio_pct";
  const bool capacity = !tokens_at_capacity.empty();
  if (capacity) out += ",tokens_at_capacity";
  out += "\n";
  char buf[256];
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& p = rows[i];
    std::snprintf(buf, sizeof(buf), "%d,%d,%lld,%.6f,%.1f,%lld,%.1f", p.seq_len, p.batch_size,
                  static_cast<long long>(p.tokens), p.wall_time_s, time_ratio_pct[i],
                  static_cast<long long>(p.est_memory_values), memory_ratio_pct[i]);
    out += buf;
    if (capacity) {
      std::snprintf(buf, sizeof(buf), ",%lld", static_cast<long long>(tokens_at_capacity[i]));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace growlen
