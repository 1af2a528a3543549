// Reverse-mode differentiation tape.
//
// A Tape is an append-only list of nodes. Each node holds its forward value,
// the ids of its inputs and a closure computing the vector-Jacobian product.
// Inputs always precede the node that consumes them, so a single reverse sweep
// over node ids is a valid topological order for backward().

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtdm/tensor.hpp"

namespace mtdm {

class Tape;

/// Handle to one node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  bool valid() const { return tape != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

  friend bool operator==(const Var& a, const Var& b) { return a.tape == b.tape && a.id == b.id; }
};

class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into inputs.
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that shares storage with an externally owned tensor (parameters).
  Var leaf(std::shared_ptr<const Tensor> value, bool requires_grad);
  /// Owned leaf that receives a gradient.
  Var variable(Tensor value);

  /// Appends an operation node. Throws NumericError if `value` is not finite.
  /// `backward` may be empty for non-differentiable ops.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, Backward backward);

  const Tensor& value(Var v) const { return *node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::string_view op_name(Var v) const { return node(v).op; }
  const std::vector<std::size_t>& inputs(Var v) const { return node(v).inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Zero-initialised gradient buffer for `v`, or nullptr if `v` takes no gradient.
  /// Only meaningful inside a Backward closure.
  Tensor* grad_sink(Var v);

  /// Populates gradients for every node reachable from the scalar `loss`.
  /// A tape can be differentiated once.
  void backward(Var loss);
  bool has_backward_run() const { return backward_done_; }

  /// Gradient of the last backward() w.r.t. `v`; zeros if `v` was unreachable.
  Tensor grad(Var v) const;

 private:
  struct Node {
    std::string_view op;
    std::shared_ptr<const Tensor> value;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape->value(*this); }
inline bool Var::requires_grad() const { return tape->requires_grad(*this); }

}  // namespace mtdm
