#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "boed/grad/tensor.hpp"

namespace boed::grad {

// A trainable array. backward() accumulates into `grad`; optimizers read it
// and the caller clears it with zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad();
  void ensure_grad();
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
// node vector is already a topological order; backward walks it once in
// reverse. A tape is single-use and must be confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is tracked but not written anywhere; read it back with grad().
  Var input(Tensor value);
  Var param(Parameter& p);

  void backward(Var root);
  // Gradient of the last backward root w.r.t. node `v` (zeros if unreachable).
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

  // Op-implementation interface.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(std::string_view op, Tensor value, const std::vector<Var>& parents, BackwardFn fn);
  bool needs_grad(std::size_t id) const noexcept { return nodes_[id].needs_grad; }
  const Tensor& value(std::size_t id) const noexcept { return nodes_[id].value; }
  const Tensor& out_grad(std::size_t id) const noexcept { return nodes_[id].grad; }
  Tensor& grad_ref(std::size_t id);
  std::string_view op_name(std::size_t id) const noexcept { return nodes_[id].op; }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);
  void check(std::size_t id) const;

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool check_finite_ = true;
  bool backward_done_ = false;
};

}  // namespace boed::grad
