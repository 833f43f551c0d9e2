#include "gmint/autodiff/tape.h"

#include "gmint/common/errors.h"

namespace gmint::ad {

const Tensor& Var::value() const { return tape_->value(*this); }

void Tape::check_live() const {
  if (consumed_) throw StaleGraphError("tape already consumed by backward()");
}

Var Tape::push(Node node) {
  check_live();
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const std::string& name, const Tensor& value, bool trainable) {
  check_live();
  if (auto it = param_index_.find(name); it != param_index_.end()) {
    if (nodes_[it->second].borrowed != &value)
      throw Error("parameter '" + name + "' already bound to a different tensor");
    return Var(this, it->second);
  }
  Node n;
  n.borrowed = &value;
  n.requires_grad = trainable;
  Var v = push(std::move(n));
  param_index_.emplace(name, v.id());
  if (trainable) params_.emplace_back(name, v.id());
  return v;
}

void Tape::bind(const ParameterSet& params) {
  for (const auto& e : params.entries()) parameter(e.name, e.tensor, e.trainable);
}

Var Tape::param(const std::string& name) const {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) throw Error("parameter '" + name + "' is not bound to this tape");
  return Var(const_cast<Tape*>(this), it->second);
}

const Tensor& Tape::value(Var v) const {
  if (v.tape_ != this) throw Error("variable belongs to a different tape");
  const Node& n = nodes_.at(v.id());
  return n.borrowed ? *n.borrowed : n.owned;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (Var in : inputs) {
    if (in.tape_ != this) throw Error("operation mixes variables from different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor* Tape::grad_sink(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(value(v).shape());
    n.has_grad = true;
  }
  return &n.grad;
}

GradientMap Tape::backward(Var loss) {
  check_live();
  const Tensor& loss_value = value(loss);
  if (loss_value.size() != 1)
    throw DimensionError("backward() needs a single-element loss, got shape " +
                         to_string(loss_value.shape()));
  GradientMap result;
  result.loss_value = loss_value[0];

  if (Tensor* seed = grad_sink(loss)) (*seed)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }

  for (const auto& [name, id] : params_) {
    Node& n = nodes_[id];
    result.entries.push_back({name, n.has_grad ? std::move(n.grad) : Tensor(n.borrowed->shape())});
  }
  consumed_ = true;
  nodes_.clear();
  return result;
}

}  // namespace gmint::ad
