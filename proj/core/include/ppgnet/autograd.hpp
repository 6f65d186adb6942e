#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppgnet/rng.hpp"

// Reverse-mode differentiation over dense 64-bit tensors. The op set is
// exactly what the network needs: conv1d (same padding), batch norm, relu,
// max pooling, dropout, linear, lstm, concat/stack/slice/permute/reshape
// plumbing, and the mean-absolute-error loss.
namespace ppgnet::ag {

class Tensor;
using Shape = std::vector<int>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same size as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into parents' grads (additive).
  std::function<void(Node&)> backward;

  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

std::int64_t shape_numel(const Shape& s);

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->size(); }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  // Gradient buffer; empty until backward() has touched this tensor.
  std::vector<double>& grad() { node_->ensure_grad(); return node_->grad; }
  const std::vector<double>& grad() const { const_cast<Tensor*>(this)->node_->ensure_grad(); return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // Runs reverse-mode accumulation from this scalar. Each reachable node's
  // backward fires exactly once; gradients of shared ancestors accumulate
  // additively.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Builds an op node. `backward` may be empty for non-differentiable ops.
Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward);

// ---- running statistics for batch normalization ----
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;  // unbiased estimate, as accumulated
  double momentum = 0.1;            // new = (1-m)*old + m*batch
  double epsilon = 1e-5;

  explicit BatchNormState(int channels = 0)
      : running_mean(static_cast<std::size_t>(channels), 0.0),
        running_var(static_cast<std::size_t>(channels), 1.0) {}
  int channels() const { return static_cast<int>(running_mean.size()); }
};

// ---- primitive operations ----

// x [N, C_in, L], w [C_out, C_in, K], b [C_out] -> [N, C_out, L].
// Cross-correlation with same padding: pad_left = (K-1)/2, pad_right the rest.
Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& b);

// x [N, C, L]. Training mode standardizes per channel over N*L, applies the
// gamma/beta affine, and folds the batch statistics into `state` (running
// variance uses the unbiased estimate). Eval mode uses the running stats.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training,
                   bool update_running_stats = true);

Tensor relu(const Tensor& x);

// x [N, C, L] -> [N, C, L/k] (floor); kernel == stride == k. Gradient routes
// to the argmax of each window, first index on ties.
Tensor maxpool1d(const Tensor& x, int k);

// Inverted scaling: training keeps elements with prob 1-rate and scales by
// 1/(1-rate); eval and rate==0 are exact identities.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// x [N, D_in], w [D_out, D_in], b [D_out] -> [N, D_out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor stack0(const std::vector<Tensor>& xs);   // T tensors [..] -> [T, ..]
Tensor slice0(const Tensor& x, int index);      // [D0, rest..] -> [rest..]
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor reshape(const Tensor& x, Shape shape);

// Two-layer-capable LSTM. x [T, N, D]; per layer: w_x [4H, D_l],
// w_h [4H, H], bias [4H] packed in gate order (input, forget, cell, output).
// Single bias vector per gate per layer. Zero initial states.
// Output: [T, layers, N, H], the hidden state of every layer at every step.
struct LstmLayerParams {
  Tensor w_x;  // [4H, D]
  Tensor w_h;  // [4H, H]
  Tensor bias; // [4H]
};
Tensor lstm(const Tensor& x, const std::vector<LstmLayerParams>& layers,
            int hidden);

// pred [N], target [N] -> scalar mean |pred - target|. Subgradient 0 at ties.
Tensor mae_loss(const Tensor& pred, const Tensor& target);

// p <- p - lr * grad for every tensor in `params`; consumed grads are
// cleared. Tensors without an allocated grad buffer are left untouched.
void sgd_step(std::span<Tensor> params, double lr);

}  // namespace ppgnet::ag
