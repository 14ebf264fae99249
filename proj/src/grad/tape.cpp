#include "boed/grad/tape.hpp"

#include "boed/errors.hpp"

namespace boed::grad {

void Parameter::zero_grad() {
  ensure_grad();
  grad.fill(0.0);
}

void Parameter::ensure_grad() {
  if (!grad.same_shape(value)) grad = Tensor(value.shape(), std::vector<double>(value.size(), 0.0));
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractViolation("value() on an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  const std::size_t id = nodes_.size() - 1;
  check(id);
  return Var(this, id);
}

void Tape::check(std::size_t id) const {
  if (check_finite_ && !nodes_[id].value.all_finite()) {
    throw NumericalFault("non-finite value produced by op '" + std::string(nodes_[id].op) +
                             "' at node " + std::to_string(id),
                         id);
  }
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.needs_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> parents,
                 BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw ContractViolation("op '" + std::string(op) + "' mixes tapes");
      n.needs_grad = n.needs_grad || nodes_[p.id()].needs_grad;
    }
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& parents,
                 BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw ContractViolation("op '" + std::string(op) + "' mixes tapes");
      n.needs_grad = n.needs_grad || nodes_[p.id()].needs_grad;
    }
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad.same_shape(n.value)) {
    n.grad = Tensor(n.value.shape(), std::vector<double>(n.value.size(), 0.0));
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ContractViolation("backward root belongs to another tape");
  if (root.value().size() != 1) {
    throw ContractViolation("backward root must be scalar, got shape " +
                            root.value().shape_string());
  }
  if (backward_done_) throw ContractViolation("backward called twice on the same tape");
  backward_done_ = true;
  if (!grad_enabled_) return;
  grad_ref(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      n.param->ensure_grad();
      n.param->grad += n.grad;
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.same_shape(n.value)) return n.grad;
  return Tensor(n.value.shape(), std::vector<double>(n.value.size(), 0.0));
}

}  // namespace boed::grad
