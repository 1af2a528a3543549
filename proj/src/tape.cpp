#include "mtdm/tape.hpp"

#include <stdexcept>

namespace mtdm {

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw std::logic_error("Var does not belong to this tape");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id >= nodes_.size()) throw std::logic_error("Var does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  return leaf(std::make_shared<const Tensor>(std::move(value)), false);
}

Var Tape::variable(Tensor value) {
  return leaf(std::make_shared<const Tensor>(std::move(value)), true);
}

Var Tape::leaf(std::shared_ptr<const Tensor> value, bool requires_grad) {
  if (backward_done_) throw std::logic_error("cannot extend a tape after backward()");
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, Backward backward) {
  if (backward_done_) throw std::logic_error("cannot extend a tape after backward()");
  if (!value.all_finite()) {
    throw NumericError("op '" + std::string(op) + "' produced non-finite values (shape " +
                       shape_str(value.shape()) + ")");
  }
  Node n;
  n.op = op;
  n.value = std::make_shared<const Tensor>(std::move(value));
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    const Node& src = node(in);
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || src.requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor* Tape::grad_sink(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (!n.grad) n.grad.emplace(n.value->shape());
  return &*n.grad;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw std::logic_error("backward() already ran on this tape; create a new tape");
  const Node& root = node(loss);
  if (root.value->size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(root.value->shape()));
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_sink(loss)->fill(Real(1));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.grad || !n.backward) continue;
    n.backward(*this, *n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad) return *n.grad;
  return Tensor(n.value->shape());
}

}  // namespace mtdm
