#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ciao/tensor.hpp"

namespace ciao {

/// A trainable tensor with its gradient accumulator.
template <class T>
struct BasicParam {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool trainable = true;

  BasicParam() = default;
  BasicParam(std::string n, BasicTensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(T{0}); }
  std::size_t size() const { return value.size(); }
};

using Param = BasicParam<float>;

template <class T>
class BasicGraph;

/// Handle to a node of a BasicGraph. Cheap to copy; valid while the graph lives.
template <class T>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(BasicGraph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  const BasicTensor<T>& value() const { return graph_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  const BasicTensor<T>& grad() const { return graph_->grad(id_); }
  bool requires_grad() const { return graph_->requires_grad(id_); }
  BasicGraph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

 private:
  BasicGraph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// trainable: only trainable params seed gradients. all: constants and frozen params
// too (frozen Param::grad is still never written). none: nothing is recorded.
enum class GradMode { trainable, all, none };

/// Define-by-run tape. Built fresh for every forward pass and consumed by one backward.
template <class T>
class BasicGraph {
 public:
  using Var = BasicVar<T>;
  // Called during backward with the node's own id; adds into input grads.
  using BackwardFn = std::function<void(BasicGraph&, std::size_t)>;

  explicit BasicGraph(GradMode mode = GradMode::trainable) : mode_(mode) {}
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  Var constant(BasicTensor<T> value) {
    return push(std::move(value), {}, nullptr, nullptr, mode_ == GradMode::all);
  }

  Var param(BasicParam<T>& p) {
    const bool rg = mode_ == GradMode::all || (mode_ == GradMode::trainable && p.trainable);
    return push(p.value, {}, nullptr, &p, rg);
  }

  Var record(BasicTensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool rg = false;
    for (std::size_t i : inputs) rg = rg || nodes_.at(i).requires_grad;
    return push(std::move(value), std::move(inputs), rg ? std::move(fn) : nullptr, nullptr, rg);
  }

  void backward(Var loss) {
    if (consumed_) throw GraphError("backward called twice on the same graph");
    if (&loss.graph() != this) throw GraphError("loss does not belong to this graph");
    if (value(loss.id()).size() != 1) {
      throw GraphError("backward requires a scalar loss, got shape " + shape_str(value(loss.id()).shape()));
    }
    consumed_ = true;
    order_.clear();
    if (!nodes_[loss.id()].requires_grad) return;
    grad_mut(loss.id()).fill(T{1});
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.grad) continue;
      order_.push_back(id);
      if (n.backward) n.backward(*this, id);
      if (n.param && n.param->trainable) {
        auto dst = n.param->grad.data();
        auto src = n.grad->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }

  const BasicTensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }

  // Zeros when no gradient reached the node.
  const BasicTensor<T>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.grad) n.grad.emplace(n.value.shape());
    return *n.grad;
  }

  BasicTensor<T>& grad_mut(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.grad) n.grad.emplace(n.value.shape());
    return *n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  // Node ids visited by the last backward, in visit order.
  const std::vector<std::size_t>& backward_order() const { return order_; }

 private:
  struct Node {
    BasicTensor<T> value;
    std::optional<BasicTensor<T>> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    BasicParam<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(BasicTensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn, BasicParam<T>* p, bool rg) {
    if (consumed_) throw GraphError("cannot record on a consumed graph");
    nodes_.push_back(Node{std::move(value), std::nullopt, std::move(inputs), std::move(fn), p, rg});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  std::vector<std::size_t> order_;
  GradMode mode_ = GradMode::trainable;
  bool consumed_ = false;
};

using Graph = BasicGraph<float>;
using Var = BasicVar<float>;

template <class T>
void zero_grads(std::span<BasicParam<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace ciao
