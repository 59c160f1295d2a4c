#include "stob/tape.hpp"

namespace stob {

template <typename T>
void Tape<T>::record(const char* op, std::vector<Tensor<T>> inputs,
                     Tensor<T> output, BackwardFn backward) {
  if (!output.defined()) {
    throw ContractError(std::string("Tape::record(") + op + "): empty output");
  }
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (nodes_.empty()) {
    throw ContractError("Tape::backward: tape is empty");
  }
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("Tape::backward: loss must be a scalar");
  }
  bool found = false;
  for (const Node& n : nodes_) {
    if (n.output.same_storage(loss)) {
      found = true;
      break;
    }
  }
  if (!found) {
    throw ContractError("Tape::backward: loss was not produced on this tape");
  }

  const T one = T(1);
  Tensor<T> seed = loss;  // shares storage; accumulate into it directly
  seed.accumulate_grad(std::span<const T>(&one, 1));

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.grad_allocated()) continue;  // does not feed the loss
    it->backward();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace stob
