#include "aifc/autograd.hpp"

#include "aifc/error.hpp"
#include "aifc/param.hpp"

namespace aifc {

const Tensor& Var::value() const { return tape->value(id); }
const Shape& Var::shape() const { return tape->value(id).shape(); }
int Var::dim(int axis) const { return tape->value(id).dim(axis); }
bool Var::requires_grad() const { return tape->requires_grad(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Tensor value) {
  auto n = std::make_unique<Node>();
  n->own = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) {
  auto n = std::make_unique<Node>();
  n->own = std::move(value);
  n->requires_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  auto n = std::make_unique<Node>();
  n->ref = &p.value;
  n->param = record_ ? &p : nullptr;
  n->requires_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Tensor value, const std::vector<int>& parents, BackwardFn fn, bool differentiable) {
  auto n = std::make_unique<Node>();
  n->own = std::move(value);
  if (record_) {
    for (int p : parents) {
      if (p >= 0 && nodes_[p]->requires_grad) {
        n->requires_grad = true;
        break;
      }
    }
    if (n->requires_grad) {
      n->backward = std::move(fn);
      if (!differentiable) nondifferentiable_ = true;
    }
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(int id) const { return nodes_.at(id)->value(); }

const Tensor& Tape::grad(int id) const { return nodes_.at(id)->grad; }

Tensor& Tape::grad_buffer(int id) {
  Node& n = *nodes_[id];
  if (n.grad.shape() != n.value().shape()) n.grad = Tensor(n.value().shape());
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  if (id < 0 || !nodes_[id]->requires_grad) return;
  Tensor& buf = grad_buffer(id);
  if (buf.size() != g.size()) throw ShapeError("gradient size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Tape::backward(Var root) {
  if (root.tape != this) throw InvalidArgument("backward: root belongs to another tape");
  if (!record_) throw InvalidArgument("backward on a non-recording tape");
  if (value(root.id).size() != 1) throw ShapeError("backward root must be a scalar");
  if (!nodes_[root.id]->requires_grad) return;
  grad_buffer(root.id)[0] += 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = *nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      Tensor& pg = n.param->grad;
      if (pg.shape() != n.grad.shape()) pg = Tensor(n.grad.shape());
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  nondifferentiable_ = false;
}

}  // namespace aifc
