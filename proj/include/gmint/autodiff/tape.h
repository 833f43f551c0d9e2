#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gmint/autodiff/parameters.h"
#include "gmint/autodiff/tensor.h"

namespace gmint::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records tensor operations for one reverse pass. A tape is single-use:
// backward() consumes it and any further use raises StaleGraphError.
//
// Parameters are borrowed, not copied. The ParameterSet they come from must
// outlive the tape and must not be modified while it is recording.
class Tape {
 public:
  // Called during the reverse sweep with the gradient of the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Registers a named leaf. Registering the same name twice returns the
  // original handle.
  Var parameter(const std::string& name, const Tensor& value, bool trainable = true);
  // Registers every entry of the set in order.
  void bind(const ParameterSet& params);
  Var param(const std::string& name) const;

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  // Gradient accumulator for an input, or nullptr when the input does not
  // need a gradient. Only meaningful inside a BackwardFn.
  Tensor* grad_sink(Var v);

  // Exact gradients of a single-element loss with respect to every
  // trainable parameter registered on this tape, in registration order.
  GradientMap backward(Var loss);

  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_live() const;
  Var push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> params_;
  std::unordered_map<std::string, std::size_t> param_index_;
  bool consumed_ = false;
};

}  // namespace gmint::ad
