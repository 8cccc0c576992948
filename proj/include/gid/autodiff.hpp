#pragma once

// Dynamic reverse-mode tape. Every differentiable op appends one node holding
// its output value and a closure that pushes the node's gradient into its
// parents. Backward walks the nodes in reverse insertion order, so each node
// is visited once and fan-out gradients accumulate additively.

#include "gid/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gid::nn {

/// A named trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() {
    if (grad.size() != value.size()) {
      grad = Tensor<T>(value.shape());
    } else {
      grad.fill(T(0));
    }
  }
};

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  /// Receives the node's output gradient; must accumulate into parents via
  /// `grad_of`.
  using Backward = std::function<void(const Tensor<T>& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When disabled, ops record values only (inference mode).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  /// Leaf whose gradient is kept on the tape (read it with `grad`).
  Var<T> leaf(Tensor<T> value) { return push(std::move(value), grad_enabled_, nullptr); }

  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var<T> param(Parameter<T>& p) {
    Var<T> v = push(p.value, grad_enabled_, nullptr);
    nodes_.back().param = &p;
    return v;
  }

  /// Records an op output. `parents` decide whether the node needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, Backward backward) {
    return record_many(std::move(value), std::vector<Var<T>>(parents), std::move(backward));
  }

  Var<T> record_many(Tensor<T> value, const std::vector<Var<T>>& parents, Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& p : parents) {
        check_owner(p);
        needs = needs || nodes_[p.id()].requires_grad;
      }
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(const Var<T>& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient buffer of `v`, allocated as zeros on first use.
  Tensor<T>& grad_of(const Var<T>& v) {
    Node& n = nodes_[v.id()];
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Gradient of `v` after backward; zeros when nothing flowed into it.
  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() != n.value.size()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure in
  /// reverse order. `loss` must hold exactly one element.
  void backward(const Var<T>& loss) {
    check_owner(loss);
    if (value(loss).size() != 1) {
      throw ShapeError("backward needs a scalar loss, got " + to_string(value(loss).shape()));
    }
    grad_of(loss).fill(T(1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() != n.value.size()) continue;
      if (n.backward) n.backward(n.grad, *this);
      if (n.param != nullptr) {
        Parameter<T>& p = *n.param;
        if (p.grad.size() != p.value.size()) p.grad = Tensor<T>(p.value.shape());
        T* dst = p.grad.data();
        const T* src = n.grad.data();
        for (std::size_t k = 0; k < p.grad.size(); ++k) dst[k] += src[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  void check_owner(const Var<T>& v) const {
    if (v.tape_ != this) throw InvalidInput("variable belongs to a different tape");
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}

/// Owns a model's parameters with stable addresses, in registration order.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<T>& add(std::string name, Shape shape) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(std::move(shape));
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  std::vector<Parameter<T>*> all() const {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter<T>*> with_prefix(const std::string& prefix) const {
    std::vector<Parameter<T>*> out;
    for (const auto& p : params_) {
      if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
    }
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

}  // namespace gid::nn
