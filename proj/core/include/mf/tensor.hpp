#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mf/util.hpp"

namespace mf {

// Dense tensor node of rank 1..3. Rank-3 is interpreted as
// [batch, rows, cols]; most ops reduce or broadcast along the last axis.
template <typename T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first use
  bool requires_grad = false;
  std::string name;                 // leaves only, for diagnostics
  std::function<void()> backward;   // set for recorded ops

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  int last_dim() const { return shape.back(); }
  // product of all dims except the last
  size_t rows() const { return numel() / static_cast<size_t>(last_dim()); }
};

// Lightweight handle; ops on the Tape return these.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  size_t numel() const { return node_->numel(); }
  const std::string& name() const { return node_->name; }
  T scalar() const {
    MF_CHECK(node_->numel() == 1, "scalar() on tensor of shape ",
          shape_str(node_->shape));
    return node_->value[0];
  }
  std::shared_ptr<Node<T>> node() const { return node_; }
  Node<T>* raw() const { return node_.get(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Leaves live outside any tape; parameters are created once and used with
// many tapes over their lifetime.
template <typename T>
Tensor<T> make_leaf(std::vector<int> shape, bool requires_grad,
                    std::string name = "") {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value.assign(n->numel(), T(0));
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return Tensor<T>(n);
}

// Execution-ordered record of primitive ops. Reverse iteration is a valid
// reverse topological order, so backward() is a single linear sweep.
// Single-threaded by contract; forward-only use with grads disabled is safe
// from many threads as long as each thread owns its own Tape.
template <typename T>
class Tape {
 public:
  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  size_t size() const { return entries_.size(); }

  Tensor<T> leaf(std::vector<int> shape, bool requires_grad,
                 std::string name = "") {
    return make_leaf<T>(std::move(shape), requires_grad, std::move(name));
  }

  Tensor<T> constant(std::vector<int> shape, std::vector<T> values) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    MF_CHECK(n->numel() == values.size(), "constant: ", values.size(),
          " values for shape ", shape_str(n->shape));
    n->value = std::move(values);
    return Tensor<T>(n);
  }

  Tensor<T> scalar_const(T v) { return constant({1}, {v}); }

  // Gradients flow from `loss` (must be scalar) to every requires_grad leaf.
  // The tape is cleared afterwards.
  void backward(const Tensor<T>& loss) {
    MF_CHECK(loss.numel() == 1, "backward: loss must be scalar, got shape ",
          shape_str(loss.shape()));
    MF_CHECK(loss.raw()->requires_grad,
          "backward: loss does not depend on any tracked parameter");
    loss.raw()->ensure_grad();
    loss.raw()->grad[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if ((*it)->backward) (*it)->backward();
    }
    clear();
  }

  void clear() { entries_.clear(); }

  // --- primitives (implemented in ops.hpp) ---
  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b,
                   bool transpose_b = false);
  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> scale(const Tensor<T>& a, T c);
  Tensor<T> relu(const Tensor<T>& a);
  Tensor<T> sigmoid(const Tensor<T>& a);
  Tensor<T> exp(const Tensor<T>& a);
  Tensor<T> log(const Tensor<T>& a);
  Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);
  Tensor<T> elem_min(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> softmax(const Tensor<T>& a);      // along last axis
  Tensor<T> log_softmax(const Tensor<T>& a);  // along last axis
  Tensor<T> layer_norm(const Tensor<T>& a, T eps);  // along last axis
  Tensor<T> masked_fill(const Tensor<T>& a, const std::vector<uint8_t>& keep,
                        T fill_value);
  Tensor<T> slice_last(const Tensor<T>& a, int start, int len);
  Tensor<T> concat_last(const std::vector<Tensor<T>>& parts);
  Tensor<T> reshape(const Tensor<T>& a, std::vector<int> new_shape);
  // out[r, :] = sum of table rows listed in groups[r]
  Tensor<T> gather_sum_rows(const Tensor<T>& table,
                            const std::vector<std::vector<int>>& groups);
  Tensor<T> masked_sum_last(const Tensor<T>& a,
                            const std::vector<uint8_t>& keep);
  Tensor<T> mean_all(const Tensor<T>& a);
  Tensor<T> sum_all(const Tensor<T>& a);
  Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> mse_masked(const Tensor<T>& a, const Tensor<T>& b,
                       const std::vector<uint8_t>& keep);
  // Per-row sum over valid components of log N(x | mean, exp(log_sigma)).
  // Masked components are skipped entirely, so padded slots never produce
  // non-finite intermediates.
  Tensor<T> gaussian_log_prob(const Tensor<T>& mean, const Tensor<T>& log_sigma,
                              const Tensor<T>& x,
                              const std::vector<uint8_t>& keep);

 private:
  std::vector<std::shared_ptr<Node<T>>> entries_;
  bool grad_enabled_ = true;

  template <typename F>
  Tensor<T> make_op(std::vector<int> shape,
                    std::vector<std::shared_ptr<Node<T>>> parents, F&& bwd) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value.assign(n->numel(), T(0));
    bool track = false;
    if (grad_enabled_) {
      for (auto& p : parents)
        if (p->requires_grad) track = true;
    }
    if (track) {
      n->requires_grad = true;
      n->backward = [n = n.get(), parents = std::move(parents),
                     f = std::forward<F>(bwd)]() mutable {
        if (n->grad.empty()) return;  // no gradient reached this node
        for (auto& p : parents)
          if (p->requires_grad) p->ensure_grad();
        f(*n);
      };
      entries_.push_back(n);
    }
    return Tensor<T>(n);
  }

#ifndef NDEBUG
  static void debug_check_finite(const Node<T>& n, const char* op) {
    for (T v : n.value)
      MF_CHECK(std::isfinite(static_cast<double>(v)), op,
            ": non-finite value in forward result");
  }
#define MF_FINITE_CHECK(node, op) debug_check_finite(node, op)
#else
#define MF_FINITE_CHECK(node, op) (void)0
#endif
};

}  // namespace mf
