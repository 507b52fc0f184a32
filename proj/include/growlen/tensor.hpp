#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "growlen/errors.hpp"

namespace growlen {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // allocated on first accumulation
  bool requires_grad = false;

  // Set when the node is the output of a recorded operation.
  std::function<void()> backward;
  std::vector<std::shared_ptr<TensorNode>> parents;
  int64_t tape_index = -1;

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
  }
};

}  // namespace detail

// Shape-carrying array of 32-bit reals with an optional gradient slot.
// Copies are shallow (shared storage); data is treated as immutable after
// forward creation except for parameter updates between steps.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                          bool requires_grad = false);

  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int rows() const { return node_->shape.at(0); }
  int cols() const { return node_->shape.at(1); }
  int64_t size() const { return node_->size(); }

  std::span<float> data() { return node_->data; }
  std::span<const float> data() const { return node_->data; }
  float scalar() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<float> grad();
  std::span<const float> grad() const;
  void ensure_grad() { node_->ensure_grad(); }
  void zero_grad();

  std::string shape_str() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_output(std::vector<int> shape, std::vector<float> data,
                               const std::vector<Tensor>& parents, bool* recorded);
  friend class Tape;
};

// Ordered record of recorded operations. Ops append their outputs while a
// tape is active; recording order is a topological order by construction.
// Confined to one worker; nested tapes stack.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)=1 and walks the tape in reverse from the loss node,
  // visiting each recorded node exactly once. Gradients of recorded
  // (non-leaf) nodes are reset first so repeated calls accumulate exactly
  // the same contribution into leaf (parameter) gradients.
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }

  static Tape* active();

  void record(const std::shared_ptr<detail::TensorNode>& node);

 private:
  std::vector<std::shared_ptr<detail::TensorNode>> nodes_;
  Tape* previous_ = nullptr;
};

// Helpers for modules that define their own recorded operations (the
// model's fused attention). `recorded` is set when a tape is active and
// some parent requires grad; the caller then installs a backward closure.
// Closures must capture the output node as a raw pointer (the tape owns
// it) — capturing the output Tensor would create a reference cycle.
Tensor make_op_output(std::vector<int> shape, std::vector<float> data,
                      const std::vector<Tensor>& parents, bool* recorded);
void set_backward(Tensor& out, std::function<void()> fn);

// --- operations ------------------------------------------------------------

// Standard matrix product a[MxK] * b[KxN] -> [MxN].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise sum of same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

// x[NxD] + bias[D] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Elementwise product of same-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float c);

Tensor sum(const Tensor& x);

// Exact GELU: 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);

// Row-wise layer normalization with learned gain/bias over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// Row-wise softmax with max-subtraction. Rows sum to 1 within 1e-6.
Tensor softmax_rows(const Tensor& x);

// Mean over rows of -log softmax(logits)[target]. Targets must be in [0, V).
Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& targets);

// Gather rows of weight[VxD] by token id -> [len(ids) x D].
Tensor embedding_rows(const Tensor& weight, const std::vector<int32_t>& ids);

// Copy columns [from, from+n) of x -> [N x n].
Tensor slice_cols(const Tensor& x, int from, int n);

// Horizontal concatenation of same-row-count matrices.
Tensor concat_cols(const std::vector<Tensor>& parts);

bool all_finite(std::span<const float> values);

}  // namespace growlen
