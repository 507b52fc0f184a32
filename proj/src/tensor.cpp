#include "growlen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace growlen {

namespace {

thread_local Tape* g_active_tape = nullptr;

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape");
    n *= d;
  }
  return n;
}

std::string fmt_shape(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + t.shape_str());
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  int64_t n = shape_product(shape);
  node->shape = std::move(shape);
  node->data.assign(static_cast<size_t>(n), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
  int64_t n = shape_product(shape);
  if (n != static_cast<int64_t>(data.size()))
    throw ShapeError("from_data: shape " + fmt_shape(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

float Tensor::scalar() const {
  if (size() != 1) throw ContractError("scalar(): tensor has " + std::to_string(size()) + " elements");
  return node_->data[0];
}

std::span<float> Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

std::span<const float> Tensor::grad() const {
  if (node_->grad.empty()) throw ContractError("grad(): no gradient present");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

std::string Tensor::shape_str() const { return fmt_shape(node_->shape); }

// --- tape --------------------------------------------------------------

Tape::Tape() {
  previous_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const std::shared_ptr<detail::TensorNode>& node) {
  node->tape_index = static_cast<int64_t>(nodes_.size());
  nodes_.push_back(node);
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
  auto loss_node = loss.node();
  if (loss_node->tape_index < 0 || loss_node->tape_index >= static_cast<int64_t>(nodes_.size()) ||
      nodes_[static_cast<size_t>(loss_node->tape_index)] != loss_node)
    throw ContractError("backward: loss was not recorded on this tape");

  // Recorded nodes are intermediates; their grads are scratch space per
  // backward call. Leaf gradients (parameters) accumulate across calls.
  for (auto& node : nodes_) {
    if (!node->grad.empty()) std::fill(node->grad.begin(), node->grad.end(), 0.0f);
  }
  loss_node->ensure_grad();
  loss_node->grad[0] = 1.0f;

  for (int64_t i = loss_node->tape_index; i >= 0; --i) {
    auto& node = nodes_[static_cast<size_t>(i)];
    if (!node->grad.empty() && node->backward) node->backward();
  }
}

Tensor make_op_output(std::vector<int> shape, std::vector<float> data,
                      const std::vector<Tensor>& parents, bool* recorded) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  bool want = false;
  if (Tape::active() != nullptr) {
    for (const auto& p : parents)
      if (p.requires_grad()) want = true;
  }
  *recorded = want;
  if (want) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (const auto& p : parents) out.node_->parents.push_back(p.node());
    Tape::active()->record(out.node_);
  }
  return out;
}

void set_backward(Tensor& out, std::function<void()> fn) {
  out.node()->backward = std::move(fn);
}

bool all_finite(std::span<const float> values) {
  for (float v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

// --- operations ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int M = a.rows(), K = a.cols(), N = b.cols();
  if (b.rows() != K)
    throw ShapeError("matmul: inner extents differ, " + a.shape_str() + " x " + b.shape_str());

  std::vector<float> out(static_cast<size_t>(M) * N, 0.0f);
  {
    const float* ad = a.data().data();
    const float* bd = b.data().data();
    float* cd = out.data();
    for (int i = 0; i < M; ++i) {
      const float* ai = ad + static_cast<size_t>(i) * K;
      float* ci = cd + static_cast<size_t>(i) * N;
      for (int k = 0; k < K; ++k) {
        const float aik = ai[k];
        const float* bk = bd + static_cast<size_t>(k) * N;
        for (int j = 0; j < N; ++j) ci[j] += aik * bk[j];
      }
    }
  }

  bool recorded = false;
  Tensor result = make_op_output({M, N}, std::move(out), {a, b}, &recorded);
  if (recorded) {
    auto an = a.node();
    auto bn = b.node();
    auto* on = result.node().get();
    set_backward(result, [an, bn, on, M, K, N]() {
      const float* g = on->grad.data();
      if (an->requires_grad) {
        // dA = dC * B^T
        an->ensure_grad();
        float* da = an->grad.data();
        const float* bd = bn->data.data();
        for (int i = 0; i < M; ++i) {
          const float* gi = g + static_cast<size_t>(i) * N;
          float* dai = da + static_cast<size_t>(i) * K;
          for (int k = 0; k < K; ++k) {
            const float* bk = bd + static_cast<size_t>(k) * N;
            float acc = 0.0f;
            for (int j = 0; j < N; ++j) acc += gi[j] * bk[j];
            dai[k] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        // dB = A^T * dC
        bn->ensure_grad();
        float* db = bn->grad.data();
        const float* ad = an->data.data();
        for (int i = 0; i < M; ++i) {
          const float* ai = ad + static_cast<size_t>(i) * K;
          const float* gi = g + static_cast<size_t>(i) * N;
          for (int k = 0; k < K; ++k) {
            const float aik = ai[k];
            float* dbk = db + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) dbk[j] += aik * gi[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
  std::vector<float> out(a.data().begin(), a.data().end());
  const float* bd = b.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];

  bool recorded = false;
  Tensor result = make_op_output(a.shape(), std::move(out), {a, b}, &recorded);
  if (recorded) {
    auto an = a.node();
    auto bn = b.node();
    auto* on = result.node().get();
    set_backward(result, [an, bn, on]() {
      const auto& g = on->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
      }
    });
  }
  return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_bias");
  if (bias.ndim() != 1 || bias.dim(0) != x.cols())
    throw ShapeError("add_bias: bias " + bias.shape_str() + " does not match " + x.shape_str());
  const int N = x.rows(), D = x.cols();
  std::vector<float> out(x.data().begin(), x.data().end());
  const float* bd = bias.data().data();
  for (int i = 0; i < N; ++i) {
    float* row = out.data() + static_cast<size_t>(i) * D;
    for (int j = 0; j < D; ++j) row[j] += bd[j];
  }

  bool recorded = false;
  Tensor result = make_op_output({N, D}, std::move(out), {x, bias}, &recorded);
  if (recorded) {
    auto xn = x.node();
    auto bn = bias.node();
    auto* on = result.node().get();
    set_backward(result, [xn, bn, on, N, D]() {
      const float* g = on->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < N; ++i) {
          const float* gi = g + static_cast<size_t>(i) * D;
          for (int j = 0; j < D; ++j) bn->grad[j] += gi[j];
        }
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
  std::vector<float> out(a.size());
  const float* ad = a.data().data();
  const float* bd = b.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];

  bool recorded = false;
  Tensor result = make_op_output(a.shape(), std::move(out), {a, b}, &recorded);
  if (recorded) {
    auto an = a.node();
    auto bn = b.node();
    auto* on = result.node().get();
    set_backward(result, [an, bn, on]() {
      const auto& g = on->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->data[i];
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& x, float c) {
  std::vector<float> out(x.size());
  const float* xd = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * c;

  bool recorded = false;
  Tensor result = make_op_output(x.shape(), std::move(out), {x}, &recorded);
  if (recorded) {
    auto xn = x.node();
    auto* on = result.node().get();
    set_backward(result, [xn, on, c]() {
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * c;
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;

  bool recorded = false;
  Tensor result = make_op_output({1}, {static_cast<float>(acc)}, {x}, &recorded);
  if (recorded) {
    auto xn = x.node();
    auto* on = result.node().get();
    set_backward(result, [xn, on]() {
      xn->ensure_grad();
      const float g = on->grad[0];
      for (auto& v : xn->grad) v += g;
    });
  }
  return result;
}

Tensor gelu(const Tensor& x) {
  constexpr float inv_sqrt2 = 0.7071067811865476f;
  std::vector<float> out(x.size());
  const float* xd = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) {
    const float v = xd[i];
    out[i] = 0.5f * v * (1.0f + std::erf(v * inv_sqrt2));
  }

  bool recorded = false;
  Tensor result = make_op_output(x.shape(), std::move(out), {x}, &recorded);
  if (recorded) {
    auto xn = x.node();
    auto* on = result.node().get();
    set_backward(result, [xn, on]() {
      constexpr float inv_sqrt2pi = 0.3989422804014327f;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        const float v = xn->data[i];
        const float cdf = 0.5f * (1.0f + std::erf(v * inv_sqrt2));
        const float pdf = inv_sqrt2pi * std::exp(-0.5f * v * v);
        xn->grad[i] += on->grad[i] * (cdf + v * pdf);
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  require_2d(x, "layer_norm");
  const int N = x.rows(), D = x.cols();
  if (gain.ndim() != 1 || gain.dim(0) != D || bias.ndim() != 1 || bias.dim(0) != D)
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(D) + "]");

  std::vector<float> out(static_cast<size_t>(N) * D);
  // normalized activations and reciprocal stddevs, saved for backward
  auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * D);
  auto rstd = std::make_shared<std::vector<float>>(static_cast<size_t>(N));

  const float* xd = x.data().data();
  const float* gd = gain.data().data();
  const float* bd = bias.data().data();
  for (int i = 0; i < N; ++i) {
    const float* row = xd + static_cast<size_t>(i) * D;
    double mean = 0.0;
    for (int j = 0; j < D; ++j) mean += row[j];
    mean /= D;
    double var = 0.0;
    for (int j = 0; j < D; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= D;
    const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*rstd)[static_cast<size_t>(i)] = r;
    float* orow = out.data() + static_cast<size_t>(i) * D;
    float* hrow = xhat->data() + static_cast<size_t>(i) * D;
    for (int j = 0; j < D; ++j) {
      const float h = (row[j] - static_cast<float>(mean)) * r;
      hrow[j] = h;
      orow[j] = h * gd[j] + bd[j];
    }
  }

  bool recorded = false;
  Tensor result = make_op_output({N, D}, std::move(out), {x, gain, bias}, &recorded);
  if (recorded) {
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    auto* on = result.node().get();
    set_backward(result, [xn, gn, bn, on, xhat, rstd, N, D]() {
      const float* g = on->grad.data();
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (int i = 0; i < N; ++i) {
        const float* gi = g + static_cast<size_t>(i) * D;
        const float* hi = xhat->data() + static_cast<size_t>(i) * D;
        if (gn->requires_grad || bn->requires_grad) {
          for (int j = 0; j < D; ++j) {
            if (gn->requires_grad) gn->grad[j] += gi[j] * hi[j];
            if (bn->requires_grad) bn->grad[j] += gi[j];
          }
        }
        if (xn->requires_grad) {
          // dx = rstd * (dy*g - mean(dy*g) - xhat * mean(dy*g*xhat))
          double mean_dg = 0.0, mean_dgh = 0.0;
          for (int j = 0; j < D; ++j) {
            const float dg = gi[j] * gn->data[j];
            mean_dg += dg;
            mean_dgh += dg * hi[j];
          }
          mean_dg /= D;
          mean_dgh /= D;
          const float r = (*rstd)[static_cast<size_t>(i)];
          float* dxi = xn->grad.data() + static_cast<size_t>(i) * D;
          for (int j = 0; j < D; ++j) {
            const float dg = gi[j] * gn->data[j];
            dxi[j] += r * (dg - static_cast<float>(mean_dg) - hi[j] * static_cast<float>(mean_dgh));
          }
        }
      }
    });
  }
  return result;
}

Tensor softmax_rows(const Tensor& x) {
  require_2d(x, "softmax_rows");
  if (!all_finite(x.data())) throw NumericError("softmax_rows: non-finite input");
  const int N = x.rows(), D = x.cols();
  std::vector<float> out(static_cast<size_t>(N) * D);
  const float* xd = x.data().data();
  for (int i = 0; i < N; ++i) {
    const float* row = xd + static_cast<size_t>(i) * D;
    float* orow = out.data() + static_cast<size_t>(i) * D;
    float mx = row[0];
    for (int j = 1; j < D; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (int j = 0; j < D; ++j) {
      const float e = std::exp(row[j] - mx);
      orow[j] = e;
      total += e;
    }
    const float inv = static_cast<float>(1.0 / total);
    for (int j = 0; j < D; ++j) orow[j] *= inv;
  }

  bool recorded = false;
  Tensor result = make_op_output({N, D}, std::move(out), {x}, &recorded);
  if (recorded) {
    auto xn = x.node();
    auto* on = result.node().get();
    set_backward(result, [xn, on, N, D]() {
      xn->ensure_grad();
      for (int i = 0; i < N; ++i) {
        const float* yi = on->data.data() + static_cast<size_t>(i) * D;
        const float* gi = on->grad.data() + static_cast<size_t>(i) * D;
        float* dxi = xn->grad.data() + static_cast<size_t>(i) * D;
        double dot = 0.0;
        for (int j = 0; j < D; ++j) dot += gi[j] * yi[j];
        for (int j = 0; j < D; ++j) dxi[j] += yi[j] * (gi[j] - static_cast<float>(dot));
      }
    });
  }
  return result;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& targets) {
  require_2d(logits, "cross_entropy");
  const int T = logits.rows(), V = logits.cols();
  if (static_cast<int>(targets.size()) != T)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(T) + " rows");
  for (int i = 0; i < T; ++i)
    if (targets[static_cast<size_t>(i)] < 0 || targets[static_cast<size_t>(i)] >= V)
      throw IndexError("cross_entropy: target id " + std::to_string(targets[static_cast<size_t>(i)]) +
                       " outside vocab of " + std::to_string(V));

  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(T) * V);
  const float* xd = logits.data().data();
  double loss_acc = 0.0;
  for (int i = 0; i < T; ++i) {
    const float* row = xd + static_cast<size_t>(i) * V;
    float* prow = probs->data() + static_cast<size_t>(i) * V;
    float mx = row[0];
    for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (int j = 0; j < V; ++j) {
      const float e = std::exp(row[j] - mx);
      prow[j] = e;
      total += e;
    }
    const float inv = static_cast<float>(1.0 / total);
    for (int j = 0; j < V; ++j) prow[j] *= inv;
    const double logz = std::log(total);
    loss_acc += logz - (row[targets[static_cast<size_t>(i)]] - mx);
  }
  const float loss = static_cast<float>(loss_acc / T);

  bool recorded = false;
  Tensor result = make_op_output({1}, {loss}, {logits}, &recorded);
  if (recorded) {
    auto xn = logits.node();
    auto* on = result.node().get();
    auto tgt = std::make_shared<std::vector<int32_t>>(targets);
    set_backward(result, [xn, on, probs, tgt, T, V]() {
      xn->ensure_grad();
      const float g = on->grad[0] / static_cast<float>(T);
      for (int i = 0; i < T; ++i) {
        const float* prow = probs->data() + static_cast<size_t>(i) * V;
        float* drow = xn->grad.data() + static_cast<size_t>(i) * V;
        for (int j = 0; j < V; ++j) drow[j] += g * prow[j];
        drow[(*tgt)[static_cast<size_t>(i)]] -= g;
      }
    });
  }
  return result;
}

Tensor embedding_rows(const Tensor& weight, const std::vector<int32_t>& ids) {
  require_2d(weight, "embedding_rows");
  const int V = weight.rows(), D = weight.cols();
  const int N = static_cast<int>(ids.size());
  std::vector<float> out(static_cast<size_t>(N) * D);
  const float* wd = weight.data().data();
  for (int i = 0; i < N; ++i) {
    const int32_t id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= V)
      throw IndexError("embedding_rows: id " + std::to_string(id) + " outside vocab of " +
                       std::to_string(V));
    std::copy_n(wd + static_cast<size_t>(id) * D, D, out.data() + static_cast<size_t>(i) * D);
  }

  bool recorded = false;
  Tensor result = make_op_output({N, D}, std::move(out), {weight}, &recorded);
  if (recorded) {
    auto wn = weight.node();
    auto* on = result.node().get();
    auto saved_ids = std::make_shared<std::vector<int32_t>>(ids);
    set_backward(result, [wn, on, saved_ids, N, D]() {
      wn->ensure_grad();
      for (int i = 0; i < N; ++i) {
        const float* gi = on->grad.data() + static_cast<size_t>(i) * D;
        float* wrow = wn->grad.data() + static_cast<size_t>((*saved_ids)[static_cast<size_t>(i)]) * D;
        for (int j = 0; j < D; ++j) wrow[j] += gi[j];
      }
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, int from, int n) {
  require_2d(x, "slice_cols");
  const int N = x.rows(), D = x.cols();
  if (from < 0 || n <= 0 || from + n > D)
    throw ShapeError("slice_cols: [" + std::to_string(from) + ", " + std::to_string(from + n) +
                     ") outside width " + std::to_string(D));
  std::vector<float> out(static_cast<size_t>(N) * n);
  const float* xd = x.data().data();
  for (int i = 0; i < N; ++i)
    std::copy_n(xd + static_cast<size_t>(i) * D + from, n, out.data() + static_cast<size_t>(i) * n);

  bool recorded = false;
  Tensor result = make_op_output({N, n}, std::move(out), {x}, &recorded);
  if (recorded) {
    auto xn = x.node();
    auto* on = result.node().get();
    set_backward(result, [xn, on, from, n, N, D]() {
      xn->ensure_grad();
      for (int i = 0; i < N; ++i) {
        const float* gi = on->grad.data() + static_cast<size_t>(i) * n;
        float* dxi = xn->grad.data() + static_cast<size_t>(i) * D + from;
        for (int j = 0; j < n; ++j) dxi[j] += gi[j];
      }
    });
  }
  return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const int N = parts[0].rows();
  int D = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != N) throw ShapeError("concat_cols: row count mismatch");
    D += p.cols();
  }
  std::vector<float> out(static_cast<size_t>(N) * D);
  int col = 0;
  for (const auto& p : parts) {
    const int W = p.cols();
    const float* pd = p.data().data();
    for (int i = 0; i < N; ++i)
      std::copy_n(pd + static_cast<size_t>(i) * W, W, out.data() + static_cast<size_t>(i) * D + col);
    col += W;
  }

  bool recorded = false;
  Tensor result = make_op_output({N, D}, std::move(out), parts, &recorded);
  if (recorded) {
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
      nodes.push_back(p.node());
      offsets.push_back(off);
      off += p.cols();
    }
    auto* on = result.node().get();
    set_backward(result, [nodes, offsets, on, N, D]() {
      for (size_t pi = 0; pi < nodes.size(); ++pi) {
        auto& pn = nodes[pi];
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        const int W = pn->shape[1];
        const int from = offsets[pi];
        for (int i = 0; i < N; ++i) {
          const float* gi = on->grad.data() + static_cast<size_t>(i) * D + from;
          float* dpi = pn->grad.data() + static_cast<size_t>(i) * W;
          for (int j = 0; j < W; ++j) dpi[j] += gi[j];
        }
      }
    });
  }
  return result;
}

}  // namespace growlen
