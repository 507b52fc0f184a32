#include "growlen/model.hpp"

#include <cmath>
#include <memory>

#include "growlen/digest.hpp"
#include "growlen/rng.hpp"

namespace growlen {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("model: vocab_size must be >= 2");
  if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
  if (n_heads < 1) throw ConfigError("model: n_heads must be >= 1");
  if (ffn_mult < 1) throw ConfigError("model: ffn_mult must be >= 1");
  if (d_model != n_heads * head_dim)
    throw ConfigError("model: d_model (" + std::to_string(d_model) + ") != n_heads*head_dim (" +
                      std::to_string(n_heads) + "*" + std::to_string(head_dim) + ")");
  if (head_dim % 2 != 0) throw ConfigError("model: head_dim must be even");
  if (rope.head_dim != head_dim) throw ConfigError("model: rope.head_dim must equal head_dim");
  rope.validate();
}

ModelConfig ModelConfig::tiny(int vocab, uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.head_dim = 16;
  cfg.ffn_mult = 4;
  cfg.rope = RopeConfig{16, 10000.0, 1.0};
  cfg.seed = seed;
  return cfg;
}

ModelConfig ModelConfig::small(uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = 256;
  cfg.d_model = 64;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.head_dim = 32;
  cfg.ffn_mult = 4;
  cfg.rope = RopeConfig{32, 10000.0, 1.0};
  cfg.seed = seed;
  return cfg;
}

void ModelParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("embedding", embedding);
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto& lp = layers[l];
    fn(p + "ln1.gain", lp.ln1_gain);
    fn(p + "ln1.bias", lp.ln1_bias);
    fn(p + "attn.wq", lp.wq);
    fn(p + "attn.bq", lp.bq);
    fn(p + "attn.wk", lp.wk);
    fn(p + "attn.bk", lp.bk);
    fn(p + "attn.wv", lp.wv);
    fn(p + "attn.bv", lp.bv);
    fn(p + "attn.wo", lp.wo);
    fn(p + "attn.bo", lp.bo);
    fn(p + "ln2.gain", lp.ln2_gain);
    fn(p + "ln2.bias", lp.ln2_bias);
    fn(p + "ffn.w_in", lp.w_in);
    fn(p + "ffn.b_in", lp.b_in);
    fn(p + "ffn.w_out", lp.w_out);
    fn(p + "ffn.b_out", lp.b_out);
  }
  fn("lnf.gain", lnf_gain);
  fn("lnf.bias", lnf_bias);
  fn("head", head);
}

void ModelParams::visit(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  auto& self = const_cast<ModelParams&>(*this);
  self.visit([&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

int64_t ModelParams::param_count() const {
  int64_t n = 0;
  visit([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

uint64_t ModelParams::checksum() const {
  Fnv1a h;
  visit([&h](const std::string& name, const Tensor& t) {
    h.update(name.data(), name.size());
    h.update(t.data().data(), t.data().size() * sizeof(float));
  });
  return h.value();
}

int64_t param_count(const ModelConfig& config) {
  const int64_t d = config.d_model, v = config.vocab_size, f = config.ffn_dim();
  const int64_t per_layer = 2 * d          // ln1 gain+bias
                            + 4 * d * d    // wq wk wv wo
                            + 4 * d        // their biases
                            + 2 * d        // ln2 gain+bias
                            + d * f + f    // ffn in
                            + f * d + d;   // ffn out
  return v * d + config.n_layers * per_layer + 2 * d + d * v;
}

namespace {

Tensor init_weight(Rng& rng, int rows, int cols, float stddev) {
  std::vector<float> data(static_cast<size_t>(rows) * cols);
  for (auto& x : data) x = rng.next_normal() * stddev;
  return Tensor::from_data({rows, cols}, std::move(data), true);
}

}  // namespace

ModelParams init(const ModelConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0x6d6f64656cull));  // "model"

  const int d = config.d_model, v = config.vocab_size, f = config.ffn_dim();
  const float stddev = 0.02f;
  // residual-branch projections scaled down with depth, GPT-2 style
  const float resid_stddev = stddev / std::sqrt(2.0f * static_cast<float>(config.n_layers));

  ModelParams p;
  p.config = config;
  p.embedding = init_weight(rng, v, d, stddev);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams lp;
    lp.ln1_gain = Tensor::full({d}, 1.0f, true);
    lp.ln1_bias = Tensor::zeros({d}, true);
    lp.wq = init_weight(rng, d, d, stddev);
    lp.bq = Tensor::zeros({d}, true);
    lp.wk = init_weight(rng, d, d, stddev);
    lp.bk = Tensor::zeros({d}, true);
    lp.wv = init_weight(rng, d, d, stddev);
    lp.bv = Tensor::zeros({d}, true);
    lp.wo = init_weight(rng, d, d, resid_stddev);
    lp.bo = Tensor::zeros({d}, true);
    lp.ln2_gain = Tensor::full({d}, 1.0f, true);
    lp.ln2_bias = Tensor::zeros({d}, true);
    lp.w_in = init_weight(rng, d, f, stddev);
    lp.b_in = Tensor::zeros({f}, true);
    lp.w_out = init_weight(rng, f, d, resid_stddev);
    lp.b_out = Tensor::zeros({d}, true);
    p.layers.push_back(std::move(lp));
  }
  p.lnf_gain = Tensor::full({d}, 1.0f, true);
  p.lnf_bias = Tensor::zeros({d}, true);
  p.head = init_weight(rng, d, v, stddev);
  return p;
}

namespace {

// Fused causal attention over RoPE-rotated q, k. Rows of q/k/v are
// `blocks` sequences of `seq_len`; row t of a block uses positions[t].
// Only the unmasked lower triangle is ever computed, so masked positions
// carry exactly zero weight.
Tensor causal_attention_blocks(const Tensor& q, const Tensor& k, const Tensor& v,
                               const RopeTable& table, int blocks, int seq_len,
                               const std::vector<int>& positions) {
  const int hd = table.head_dim();
  const int T = seq_len;
  const int N = blocks * T;
  if (q.rows() != N || q.cols() != hd || k.shape() != q.shape() || v.shape() != q.shape())
    throw ShapeError("attention: expected q/k/v of [" + std::to_string(N) + "x" +
                     std::to_string(hd) + "], got " + q.shape_str() + ", " + k.shape_str() + ", " +
                     v.shape_str());
  if (static_cast<int>(positions.size()) != T)
    throw ShapeError("attention: positions length " + std::to_string(positions.size()) +
                     " != seq_len " + std::to_string(T));
  for (int t = 0; t < T; ++t) {
    table.check_position(positions[static_cast<size_t>(t)]);
    if (t > 0 && positions[static_cast<size_t>(t)] <= positions[static_cast<size_t>(t - 1)])
      throw ContractError("attention: positions must be strictly increasing");
  }

  const float att_scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const int pairs = hd / 2;

  // saved for backward: per-row rotation values, rotated q/k, attention weights
  auto crows = std::make_shared<std::vector<float>>(static_cast<size_t>(T) * pairs);
  auto srows = std::make_shared<std::vector<float>>(static_cast<size_t>(T) * pairs);
  for (int t = 0; t < T; ++t) {
    const int pos = positions[static_cast<size_t>(t)];
    std::copy_n(table.cos_row(pos), pairs, crows->data() + static_cast<size_t>(t) * pairs);
    std::copy_n(table.sin_row(pos), pairs, srows->data() + static_cast<size_t>(t) * pairs);
  }
  auto qr = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * hd);
  auto kr = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * hd);
  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(blocks) * T * T, 0.0f);

  const float* qd = q.data().data();
  const float* kd = k.data().data();
  for (int b = 0; b < blocks; ++b) {
    for (int t = 0; t < T; ++t) {
      const size_t row = static_cast<size_t>(b) * T + t;
      const float* c = crows->data() + static_cast<size_t>(t) * pairs;
      const float* s = srows->data() + static_cast<size_t>(t) * pairs;
      const float* qi = qd + row * hd;
      const float* ki = kd + row * hd;
      float* qro = qr->data() + row * hd;
      float* kro = kr->data() + row * hd;
      for (int i = 0; i < pairs; ++i) {
        const float q0 = qi[2 * i], q1 = qi[2 * i + 1];
        qro[2 * i] = q0 * c[i] - q1 * s[i];
        qro[2 * i + 1] = q0 * s[i] + q1 * c[i];
        const float k0 = ki[2 * i], k1 = ki[2 * i + 1];
        kro[2 * i] = k0 * c[i] - k1 * s[i];
        kro[2 * i + 1] = k0 * s[i] + k1 * c[i];
      }
    }
  }

  std::vector<float> out(static_cast<size_t>(N) * hd, 0.0f);
  const float* vd = v.data().data();
  std::vector<float> srow(static_cast<size_t>(T));
  for (int b = 0; b < blocks; ++b) {
    const size_t base = static_cast<size_t>(b) * T;
    for (int t = 0; t < T; ++t) {
      const float* qt = qr->data() + (base + t) * hd;
      float mx = -1e30f;
      for (int j = 0; j <= t; ++j) {
        const float* kj = kr->data() + (base + j) * hd;
        float acc = 0.0f;
        for (int i = 0; i < hd; ++i) acc += qt[i] * kj[i];
        acc *= att_scale;
        srow[static_cast<size_t>(j)] = acc;
        mx = std::max(mx, acc);
      }
      double total = 0.0;
      float* prow = probs->data() + (base + t) * T;
      for (int j = 0; j <= t; ++j) {
        const float e = std::exp(srow[static_cast<size_t>(j)] - mx);
        prow[j] = e;
        total += e;
      }
      const float inv = static_cast<float>(1.0 / total);
      float* orow = out.data() + (base + t) * hd;
      for (int j = 0; j <= t; ++j) {
        const float w = prow[j] * inv;
        prow[j] = w;
        const float* vj = vd + (base + j) * hd;
        for (int i = 0; i < hd; ++i) orow[i] += w * vj[i];
      }
    }
  }

  bool recorded = false;
  Tensor result = make_op_output({N, hd}, std::move(out), {q, k, v}, &recorded);
  if (recorded) {
    auto qn = q.node();
    auto kn = k.node();
    auto vn = v.node();
    auto* on = result.node().get();
    set_backward(result, [qn, kn, vn, on, qr, kr, probs, crows, srows, blocks, T, hd, att_scale]() {
      qn->ensure_grad();
      kn->ensure_grad();
      vn->ensure_grad();
      const int pairs = hd / 2;
      std::vector<float> dprow(static_cast<size_t>(T));
      std::vector<float> dqr(static_cast<size_t>(T) * hd);
      std::vector<float> dkr(static_cast<size_t>(T) * hd);
      for (int b = 0; b < blocks; ++b) {
        const size_t base = static_cast<size_t>(b) * T;
        std::fill(dqr.begin(), dqr.end(), 0.0f);
        std::fill(dkr.begin(), dkr.end(), 0.0f);
        for (int t = 0; t < T; ++t) {
          const float* g = on->grad.data() + (base + t) * hd;
          const float* prow = probs->data() + (base + t) * T;
          // dv and dp
          for (int j = 0; j <= t; ++j) {
            const float* vj = vn->data.data() + (base + j) * hd;
            float* dvj = vn->grad.data() + (base + j) * hd;
            const float w = prow[j];
            float dp = 0.0f;
            for (int i = 0; i < hd; ++i) {
              dvj[i] += w * g[i];
              dp += g[i] * vj[i];
            }
            dprow[static_cast<size_t>(j)] = dp;
          }
          // softmax jacobian
          double dot = 0.0;
          for (int j = 0; j <= t; ++j) dot += static_cast<double>(prow[j]) * dprow[static_cast<size_t>(j)];
          // ds -> dqr, dkr
          const float* qt = qr->data() + (base + t) * hd;
          float* dqt = dqr.data() + static_cast<size_t>(t) * hd;
          for (int j = 0; j <= t; ++j) {
            const float ds = att_scale * prow[j] * (dprow[static_cast<size_t>(j)] - static_cast<float>(dot));
            const float* kj = kr->data() + (base + j) * hd;
            float* dkj = dkr.data() + static_cast<size_t>(j) * hd;
            for (int i = 0; i < hd; ++i) {
              dqt[i] += ds * kj[i];
              dkj[i] += ds * qt[i];
            }
          }
        }
        // un-rotate pair gradients (rotate by -angle)
        for (int t = 0; t < T; ++t) {
          const float* c = crows->data() + static_cast<size_t>(t) * pairs;
          const float* s = srows->data() + static_cast<size_t>(t) * pairs;
          const float* dq = dqr.data() + static_cast<size_t>(t) * hd;
          const float* dk = dkr.data() + static_cast<size_t>(t) * hd;
          float* dqo = qn->grad.data() + (base + t) * hd;
          float* dko = kn->grad.data() + (base + t) * hd;
          for (int i = 0; i < pairs; ++i) {
            dqo[2 * i] += dq[2 * i] * c[i] + dq[2 * i + 1] * s[i];
            dqo[2 * i + 1] += -dq[2 * i] * s[i] + dq[2 * i + 1] * c[i];
            dko[2 * i] += dk[2 * i] * c[i] + dk[2 * i + 1] * s[i];
            dko[2 * i + 1] += -dk[2 * i] * s[i] + dk[2 * i + 1] * c[i];
          }
        }
      }
    });
  }
  return result;
}

std::vector<int> default_positions(int seq_len) {
  std::vector<int> pos(static_cast<size_t>(seq_len));
  for (int t = 0; t < seq_len; ++t) pos[static_cast<size_t>(t)] = t;
  return pos;
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const RopeTable& table,
                 const std::vector<int>& positions) {
  return causal_attention_blocks(q, k, v, table, 1, q.rows(), positions);
}

Tensor forward_batch(const ModelParams& params, std::span<const int32_t> ids, int batch_size,
                     int seq_len, const RopeTable& table) {
  const auto& cfg = params.config;
  if (seq_len > table.max_position())
    throw RangeError("forward: seq_len " + std::to_string(seq_len) + " exceeds table extent " +
                     std::to_string(table.max_position()));
  if (static_cast<int64_t>(ids.size()) != static_cast<int64_t>(batch_size) * seq_len)
    throw ShapeError("forward: token count does not match batch x seq_len");

  const auto positions = default_positions(seq_len);
  std::vector<int32_t> flat(ids.begin(), ids.end());

  Tensor x = embedding_rows(params.embedding, flat);
  for (const auto& lp : params.layers) {
    Tensor h = layer_norm(x, lp.ln1_gain, lp.ln1_bias);
    Tensor q = add_bias(matmul(h, lp.wq), lp.bq);
    Tensor k = add_bias(matmul(h, lp.wk), lp.bk);
    Tensor v = add_bias(matmul(h, lp.wv), lp.bv);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(cfg.n_heads));
    for (int hidx = 0; hidx < cfg.n_heads; ++hidx) {
      const int from = hidx * cfg.head_dim;
      Tensor qh = slice_cols(q, from, cfg.head_dim);
      Tensor kh = slice_cols(k, from, cfg.head_dim);
      Tensor vh = slice_cols(v, from, cfg.head_dim);
      heads.push_back(causal_attention_blocks(qh, kh, vh, table, batch_size, seq_len, positions));
    }
    Tensor att = cfg.n_heads == 1 ? heads[0] : concat_cols(heads);
    Tensor o = add_bias(matmul(att, lp.wo), lp.bo);
    x = add(x, o);
    Tensor h2 = layer_norm(x, lp.ln2_gain, lp.ln2_bias);
    Tensor f = gelu(add_bias(matmul(h2, lp.w_in), lp.b_in));
    Tensor f2 = add_bias(matmul(f, lp.w_out), lp.b_out);
    x = add(x, f2);
  }
  Tensor hf = layer_norm(x, params.lnf_gain, params.lnf_bias);
  return matmul(hf, params.head);
}

Tensor forward(const ModelParams& params, std::span<const int32_t> tokens, const RopeTable& table) {
  return forward_batch(params, tokens, 1, static_cast<int>(tokens.size()), table);
}

Tensor loss_batch(const ModelParams& params, std::span<const int32_t> inputs,
                  std::span<const int32_t> targets, int batch_size, int seq_len,
                  const RopeTable& table) {
  if (inputs.size() != targets.size()) throw ShapeError("loss: inputs/targets length mismatch");
  Tensor logits = forward_batch(params, inputs, batch_size, seq_len, table);
  return cross_entropy(logits, std::vector<int32_t>(targets.begin(), targets.end()));
}

}  // namespace growlen
