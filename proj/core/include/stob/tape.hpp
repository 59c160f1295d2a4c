#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "stob/tensor.hpp"

namespace stob {

/// Reverse-mode autodiff tape.
///
/// Each differentiable operation appends one node holding its inputs, its
/// output and a closure that pushes the output gradient back onto the input
/// gradients. Nodes are appended in execution order, so walking the list
/// backwards visits them in reverse topological order; every node is
/// visited at most once. Nodes whose output never received a gradient are
/// skipped, which confines the backward pass to the subgraph that actually
/// feeds the loss.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Appends one node. `backward` must read output.grad() and call
  /// accumulate_grad on whichever inputs require gradients.
  void record(const char* op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape backwards. `loss` must
  /// be a scalar produced by an operation recorded on this tape.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Forgets all nodes (releases intermediate tensors).
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const char* op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

/// True when `tape` is non-null and any input requires a gradient; the
/// common guard deciding whether an op records itself.
template <typename T>
bool tracing(const Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace stob
