#pragma once

#include "gino/tensor.hpp"

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace gino {

template <typename Scalar>
class Tape;

/// Handle to a node recorded on a tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Index dim(Index axis) const { return value().dim(axis); }
  Index size() const { return value().size(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  const Tensor<Scalar>& grad() const { return tape_->grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recording. Nodes are appended in evaluation order, so every node's
/// parents precede it and a single reverse sweep visits each node once.
template <typename Scalar>
class Tape {
 public:
  /// Called with the node's upstream gradient; pushes contributions into parents.
  using BackwardFn = std::function<void(const Tensor<Scalar>& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false) {
    check_finite(value, "leaf");
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}, nullptr});
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  /// Records an op result. The backward closure is dropped when no parent needs gradients.
  Var<Scalar> record(Tensor<Scalar> value, std::vector<int> parents, BackwardFn backward, const char* op = "op") {
    check_finite(value, op);
    bool needs = false;
    for (int p : parents) needs = needs || nodes_.at(static_cast<std::size_t>(p)).requires_grad;
    if (!needs) {
      parents.clear();
      backward = nullptr;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, std::move(parents), std::move(backward)});
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Tensor<Scalar>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  /// Gradient buffer of a node; zeros if nothing has flowed into it.
  const Tensor<Scalar>& grad(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!allocated(n)) n.grad = Tensor<Scalar>::zeros(n.value.shape());
    return n.grad;
  }

  /// Mutable accumulation target for backward closures; null when the node needs no gradient.
  Tensor<Scalar>* grad_target(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.requires_grad) return nullptr;
    if (!allocated(n)) n.grad = Tensor<Scalar>::zeros(n.value.shape());
    return &n.grad;
  }

  void accumulate(int id, const Tensor<Scalar>& g) {
    if (Tensor<Scalar>* t = grad_target(id)) t->data() += g.data();
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse. The tape is consumed:
  /// closures are released afterwards and a second call is a contract error.
  void backward(const Var<Scalar>& loss) {
    if (consumed_) throw ContractError("backward called twice on the same tape");
    if (loss.size() != 1) throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    if (nodes_.empty()) throw ContractError("backward on an empty tape");
    Node& root = nodes_.at(static_cast<std::size_t>(loss.id()));
    if (!root.requires_grad) throw ContractError("loss does not depend on any parameter");
    grad_target(loss.id())->data().setConstant(Scalar(1));
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.backward || !allocated(n)) continue;
      n.backward(n.grad, *this);
      n.backward = nullptr;
    }
    consumed_ = true;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad;
    std::vector<int> parents;
    BackwardFn backward;
  };

  static bool allocated(const Node& n) {
    return n.grad.size() == n.value.size() && n.grad.shape() == n.value.shape();
  }

  static void check_finite(const Tensor<Scalar>& t, const char* op) {
    if (!t.all_finite()) throw NumericalError(std::string("non-finite value produced by ") + op);
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Named learnable tensors with a stable (sorted) iteration order.
template <typename Scalar>
using ParameterSet = std::map<std::string, Tensor<Scalar>>;

/// Parameters registered as gradient-tracking leaves of one tape.
template <typename Scalar>
class Bound {
 public:
  /// With `requires_grad` false the parameters are constants and nothing is kept for backward.
  Bound(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, bool requires_grad = true) : tape_(&tape) {
    for (const auto& [name, value] : params) vars_.emplace(name, tape.leaf(value, requires_grad));
  }

  const Var<Scalar>& operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return vars_.count(name) != 0; }

  Tape<Scalar>& tape() const { return *tape_; }

  /// Gradients keyed like the parameter set; call after Tape::backward.
  ParameterSet<Scalar> gradients() const {
    ParameterSet<Scalar> out;
    for (const auto& [name, v] : vars_) out.emplace(name, tape_->grad(v.id()));
    return out;
  }

 private:
  Tape<Scalar>* tape_;
  std::map<std::string, Var<Scalar>> vars_;
};

}  // namespace gino
