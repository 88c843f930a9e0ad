#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corrnet/tensor.hpp"

namespace corrnet {

/// A value on the tape together with its accumulated gradient.
struct Variable {
  NDTensor value;
  NDTensor grad;  // unset until something flows into it
  bool requires_grad = false;
  int node = -1;  // producing tape node, -1 for leaves

  /// Adds `g` into grad, allocating on first use.
  void accumulate(const NDTensor& g);
  void accumulate(NDTensor&& g);
  /// Returns grad, materializing zeros when nothing has flowed in.
  NDTensor& grad_or_zeros();
};

using Var = std::shared_ptr<Variable>;

Var make_leaf(NDTensor value, bool requires_grad = false);

/// Define-by-run reverse-mode tape.
///
/// Ops record a node holding their inputs and a closure mapping the output
/// gradient onto input gradients. Recording order is a topological order, so
/// backward is a single reverse sweep. A node whose input was produced by a
/// later node indicates a corrupted tape and raises InternalError.
class Tape {
 public:
  using BackwardFn = std::function<void(const NDTensor& d_out)>;

  Tape() = default;
  /// A non-recording tape evaluates ops without keeping backward state.
  explicit Tape(bool recording) : recording_(recording) {}

  /// Records `value` as the output of `op`. Nodes whose inputs need no
  /// gradient are not recorded; the result is then a constant leaf.
  Var record(std::string op, std::vector<Var> inputs, NDTensor value, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 for a one-element root.
  void backward(const Var& root);
  void backward(const Var& root, const NDTensor& seed);

  /// First recorded node (in forward order) whose value has a NaN or Inf.
  [[nodiscard]] std::optional<std::size_t> first_nonfinite() const;

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const std::string& op_name(std::size_t i) const { return nodes_[i].op; }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::string op;
    std::vector<Var> inputs;
    std::weak_ptr<Variable> output;
    BackwardFn backward;
  };

  void check_order() const;

  std::vector<Node> nodes_;
  bool recording_ = true;
};

}  // namespace corrnet
