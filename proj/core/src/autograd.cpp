#include "corrnet/autograd.hpp"

#include <algorithm>

namespace corrnet {

void Variable::accumulate(const NDTensor& g) {
  if (!grad.is_set()) {
    grad = g;
  } else {
    grad.add_(g);
  }
}

void Variable::accumulate(NDTensor&& g) {
  if (!grad.is_set()) {
    grad = std::move(g);
  } else {
    grad.add_(g);
  }
}

NDTensor& Variable::grad_or_zeros() {
  if (!grad.is_set()) grad = NDTensor(value.shape());
  return grad;
}

Var make_leaf(NDTensor value, bool requires_grad) {
  auto v = std::make_shared<Variable>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

Var Tape::record(std::string op, std::vector<Var> inputs, NDTensor value, BackwardFn backward) {
  const bool needs = recording_ && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v && v->requires_grad; });
  auto out = make_leaf(std::move(value), needs);
  if (!needs) return out;
  out->node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::move(op), std::move(inputs), out, std::move(backward)});
  return out;
}

void Tape::check_order() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& in : nodes_[i].inputs) {
      if (in && in->node >= static_cast<int>(i)) {
        throw InternalError("autograd tape has a cycle at node " + std::to_string(i) + " (" +
                            nodes_[i].op + ")");
      }
    }
  }
}

std::optional<std::size_t> Tape::first_nonfinite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto out = nodes_[i].output.lock();
    if (out && !out->value.all_finite()) return i;
  }
  return std::nullopt;
}

void Tape::backward(const Var& root) {
  if (root->value.size() != 1) {
    throw ShapeError("backward(root) needs a scalar root; pass an explicit seed");
  }
  backward(root, NDTensor::full(root->value.shape(), 1.0));
}

void Tape::backward(const Var& root, const NDTensor& seed) {
  if (seed.shape() != root->value.shape()) throw ShapeError("backward seed shape mismatch");
  check_order();
  root->accumulate(seed);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto out = nodes_[i].output.lock();
    if (!out || !out->grad.is_set()) continue;
    nodes_[i].backward(out->grad);
    // Interior gradients are not needed after propagation.
    if (out != root) out->grad = NDTensor();
  }
}

}  // namespace corrnet
