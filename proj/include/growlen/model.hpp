#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "growlen/rope.hpp"
#include "growlen/tensor.hpp"

namespace growlen {

struct ModelConfig {
  int vocab_size = 256;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int head_dim = 32;
  int ffn_mult = 4;
  RopeConfig rope{32, 10000.0, 1.0};
  uint64_t seed = 0;

  void validate() const;
  int ffn_dim() const { return ffn_mult * d_model; }

  // Tiny config for oracles: 1 layer, d=16.
  static ModelConfig tiny(int vocab = 11, uint64_t seed = 0);
  // Small config for training experiments: 2 layers, d=64, 2 heads, byte vocab.
  static ModelConfig small(uint64_t seed = 0);
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w_in, b_in;    // d_model -> ffn_dim
  Tensor w_out, b_out;  // ffn_dim -> d_model
};

// Decoder-only pre-norm transformer parameters. The output head is untied
// from the embedding.
struct ModelParams {
  ModelConfig config;
  Tensor embedding;  // [vocab x d_model]
  std::vector<LayerParams> layers;
  Tensor lnf_gain, lnf_bias;
  Tensor head;  // [d_model x vocab]

  // Fixed iteration order; checkpoint layout and optimizer slots depend on it.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  int64_t param_count() const;
  uint64_t checksum() const;
};

// Closed-form parameter count for a config; init() must agree with it.
int64_t param_count(const ModelConfig& config);

// Seeded initialization; identical seed gives bitwise-identical parameters.
ModelParams init(const ModelConfig& config);

// Causal-masked scaled dot-product attention over RoPE-rotated q, k for a
// single sequence; positions must be strictly increasing and inside the
// table. Scores scaled by 1/sqrt(head_dim); masked positions get exactly
// zero weight.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const RopeTable& table,
                 const std::vector<int>& positions);

// Logits [T x vocab] for one sequence. T must fit the table extent.
Tensor forward(const ModelParams& params, std::span<const int32_t> tokens, const RopeTable& table);

// Batched forward: ids holds batch_size sequences of seq_len tokens,
// row-major. Returns logits [(batch*seq_len) x vocab].
Tensor forward_batch(const ModelParams& params, std::span<const int32_t> ids, int batch_size,
                     int seq_len, const RopeTable& table);

// Mean next-token cross-entropy over a batch; the training objective.
Tensor loss_batch(const ModelParams& params, std::span<const int32_t> inputs,
                  std::span<const int32_t> targets, int batch_size, int seq_len,
                  const RopeTable& table);

}  // namespace growlen
