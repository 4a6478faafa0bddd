#pragma once

// Explicit reverse-mode tape. Ops append nodes in creation order, which is a
// topological order, so backward is a single reverse sweep. A tape built with
// record=false keeps values only and never stores backward closures; that is
// how encode/decode run inference.

#include <functional>
#include <memory>
#include <vector>

#include "aifc/tensor.hpp"

namespace aifc {

struct Parameter;
class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const;
  int dim(int axis) const;
  bool requires_grad() const;
  // Gradient accumulated by the last backward(); empty tensor if none reached this node.
  const Tensor& grad() const;
};

class Tape {
 public:
  // Called with the output gradient; implementations push into parent grads.
  using BackwardFn = std::function<void(Tape&, const Tensor&)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  Var leaf(Tensor value);  // requires grad
  Var param(Parameter& p);

  // Appends an op node. The node requires grad iff recording and any parent does.
  Var push(Tensor value, const std::vector<int>& parents, BackwardFn fn, bool differentiable = true);

  const Tensor& value(int id) const;
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id]->requires_grad; }
  // Mutable accumulator, zero-allocated on first use.
  Tensor& grad_buffer(int id);
  void accumulate(int id, const Tensor& g);

  // Seeds d(root)/d(root) = 1 (root must hold one element) and sweeps the tape once.
  void backward(Var root);

  // True once any non-differentiable op (rounding) participates in a grad path.
  bool saw_nondifferentiable() const { return nondifferentiable_; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor own;
    const Tensor* ref = nullptr;
    Tensor grad;
    Parameter* param = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
    const Tensor& value() const { return ref ? *ref : own; }
  };

  std::vector<std::unique_ptr<Node>> nodes_;
  bool record_;
  bool nondifferentiable_ = false;
};

}  // namespace aifc
