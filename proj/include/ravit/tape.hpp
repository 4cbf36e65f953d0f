#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ravit/numerics.hpp"
#include "ravit/tensor.hpp"

namespace ravit::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Gradient of a scalar loss with respect to parameter tensors.
class Gradients {
 public:
  /// Gradient for `param`, or zeros of its shape when the loss does not depend on it.
  Tensor of(const Tensor& param) const;
  const Tensor* find(const Tensor& param) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<const Tensor*, Tensor> grads_;
};

/// Records a computation as an ordered list of nodes and runs reverse-mode
/// differentiation over it. Nodes are appended in evaluation order, so every
/// input precedes its consumer; backward() walks them once, last to first.
///
/// Parameters are bound by address: binding the same Tensor twice yields the
/// same leaf, and its gradient is reported under that address.
class Tape {
 public:
  /// Receives this node's accumulated output gradient and pushes
  /// contributions into its inputs through accumulate().
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(const Tensor& param);

  /// Appends an op node. `inputs` determine whether the node needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward, const char* op);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward, const char* op);

  const Matrix& value(std::size_t index) const { return nodes_[index].value; }
  bool needs_grad(std::size_t index) const { return nodes_[index].requires_grad; }
  bool needs_grad(const Var& v) const { return needs_grad(v.index()); }

  template <typename Derived>
  void accumulate(const Var& target, const Eigen::MatrixBase<Derived>& grad) {
    Node& node = nodes_[target.index()];
    if (!node.requires_grad) return;
    if (!node.has_grad) {
      node.grad = grad;
      node.has_grad = true;
    } else {
      node.grad += grad;
    }
  }

  /// Reverse pass from a 1x1 loss. Throws ContractError for non-scalar losses.
  Gradients backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    const Tensor* param = nullptr;
    Shape param_shape;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var make_var(std::size_t index) { return Var(this, index); }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_index_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Matrix-valued ops count MACs through the active
// MacCounter exactly like ravit::matmul.
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// x * W + b with b broadcast over rows.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var sum(const Var& x);
/// Rows of `top` followed by rows of `bottom`.
Var vstack(const Var& top, const Var& bottom);
Var row(const Var& x, Eigen::Index r);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);
Var gelu(const Var& x);
Var softmax_rows(const Var& x);
/// Multi-head scaled dot-product attention over q, k, v of shape L x D.
/// Columns are split into `heads` contiguous groups of D/heads.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads);
/// -log softmax(logits)[label] for a 1 x n logits row, as a 1x1 value.
Var cross_entropy(const Var& logits, std::size_t label);
/// Sum of weights[i] * terms[i] over 1x1 terms.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

/// Per-head attention probabilities (L x L each) for inspection; not recorded.
std::vector<Matrix> attention_weights(const Matrix& q, const Matrix& k, std::size_t heads);

}  // namespace ravit::ad
