#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dbt/engine/tensor.hpp"

namespace dbt {

template <typename T>
using Bindings = std::map<std::string, Tensor<T>>;

/// Handle to a node of a Graph.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

/// Per-node state produced by a forward pass. `saved` is tape context and is
/// released by the backward pass; `aux` holds side outputs that outlive it.
template <typename T>
struct OpContext {
  std::vector<Tensor<T>> saved;
  std::vector<Tensor<T>> aux;
};

template <typename T>
using Inputs = std::span<const Tensor<T>* const>;

/// A differentiable primitive. Implementations must not mutate their inputs.
template <typename T>
class Op {
 public:
  virtual ~Op() = default;

  virtual std::string name() const = 0;

  /// Throws Error(kShape) with a description of expected vs actual shapes.
  virtual Tensor<T> forward(Inputs<T> in, OpContext<T>& ctx) const = 0;

  /// Returns one gradient per input; entries whose `need` flag is false may
  /// be null tensors.
  virtual std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>& out,
                                          const Tensor<T>& grad_out, const OpContext<T>& ctx,
                                          std::span<const bool> need) const = 0;
};

/// Recorded computation with deferred execution.
///
/// Nodes are appended in topological order (an op can only reference nodes
/// that already exist), so the graph is acyclic by construction. `evaluate`
/// runs the forward pass and records the tape; `gradients` consumes it.
template <typename T>
class Graph {
 public:
  Var input(const std::string& name, bool requires_grad = false);
  Var constant(Tensor<T> value, std::string label = {});
  Var apply(std::shared_ptr<const Op<T>> op, std::vector<Var> inputs, std::string label = {});

  void mark_output(const std::string& name, Var v);

  std::map<std::string, Tensor<T>> evaluate(const Bindings<T>& bindings);

  /// Reverse-mode gradients of a [1]-shaped node with respect to every
  /// requires_grad input. Unused inputs get zeros of their bound shape.
  std::map<std::string, Tensor<T>> gradients(Var scalar_output);

  const Tensor<T>& value(Var v) const;
  const std::vector<Tensor<T>>& aux(Var v) const;
  std::string describe(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool evaluated() const noexcept { return evaluated_; }
  bool tape_live() const noexcept { return tape_live_; }
  std::vector<std::string> input_names() const;

 private:
  enum class Kind { kInput, kConstant, kOp };

  struct Node {
    Kind kind;
    std::string name;  // input name or diagnostic label
    bool requires_grad = false;
    std::shared_ptr<const Op<T>> op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    OpContext<T> ctx;
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> input_index_;
  std::map<std::string, std::size_t> outputs_;
  bool evaluated_ = false;
  bool tape_live_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace dbt
