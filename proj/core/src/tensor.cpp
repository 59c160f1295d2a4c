#include "stob/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stob {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

template <typename T>
const typename Tensor<T>::Impl& Tensor<T>::impl(const char* what) const {
  if (!impl_) throw ContractError(std::string(what) + ": tensor is empty");
  return *impl_;
}

template <typename T>
typename Tensor<T>::Impl& Tensor<T>::impl(const char* what) {
  if (!impl_) throw ContractError(std::string(what) + ": tensor is empty");
  return *impl_;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->values.assign(static_cast<std::size_t>(numel(shape)), T(0));
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->values.assign(static_cast<std::size_t>(numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(Shape{}, value, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> values,
                               bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
    throw ShapeError("from_data: got " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return impl("shape").shape;
}

template <typename T>
std::int64_t Tensor<T>::size() const {
  return static_cast<std::int64_t>(impl("size").values.size());
}

template <typename T>
std::int64_t Tensor<T>::dim(std::int64_t i) const {
  const Shape& s = shape();
  const std::int64_t r = static_cast<std::int64_t>(s.size());
  const std::int64_t j = i < 0 ? i + r : i;
  if (j < 0 || j >= r) {
    throw ShapeError("dim: axis " + std::to_string(i) + " out of range for " +
                     shape_str(s));
  }
  return s[static_cast<std::size_t>(j)];
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  const Impl& im = impl("data");
  return {im.values.data(), im.values.size()};
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  Impl& im = impl("mutable_data");
  return {im.values.data(), im.values.size()};
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl("requires_grad").requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  impl("set_requires_grad").requires_grad = value;
}

template <typename T>
bool Tensor<T>::grad_allocated() const {
  return impl_ != nullptr && !impl_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  const Impl& im = impl("grad");
  if (im.grad.empty()) {
    throw ContractError("grad: no gradient accumulated for shape " +
                        shape_str(im.shape));
  }
  return {im.grad.data(), im.grad.size()};
}

template <typename T>
void Tensor<T>::accumulate_grad(std::span<const T> delta) const {
  if (!impl_) throw ContractError("accumulate_grad: undefined tensor");
  Impl& im = *impl_;
  if (delta.size() != im.values.size()) {
    throw ShapeError("accumulate_grad: got " + std::to_string(delta.size()) +
                     " values for shape " + shape_str(im.shape));
  }
  if (im.grad.empty()) im.grad.assign(im.values.size(), T(0));
  for (std::size_t i = 0; i < delta.size(); ++i) im.grad[i] += delta[i];
}

template <typename T>
void Tensor<T>::zero_grad() const {
  if (!impl_) throw ContractError("zero_grad: undefined tensor");
  impl_->grad.clear();
}

template <typename T>
T Tensor<T>::item() const {
  const Impl& im = impl("item");
  if (im.values.size() != 1) {
    throw ContractError("item: tensor has " + std::to_string(im.values.size()) +
                        " elements, expected 1");
  }
  return im.values[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  const Impl& im = impl("at");
  if (index.size() != im.shape.size()) {
    throw ShapeError("at: rank mismatch for " + shape_str(im.shape));
  }
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (std::int64_t idx : index) {
    const std::int64_t extent = im.shape[axis];
    if (idx < 0 || idx >= extent) {
      throw ShapeError("at: index " + std::to_string(idx) + " out of range on axis " +
                       std::to_string(axis) + " of " + shape_str(im.shape));
    }
    flat = flat * extent + idx;
    ++axis;
  }
  return im.values[static_cast<std::size_t>(flat)];
}

template <typename T>
Tensor<T> Tensor<T>::detach_copy() const {
  const Impl& im = impl("detach_copy");
  return from_data(im.shape, im.values, /*requires_grad=*/false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  const Impl& im = impl("clone");
  return from_data(im.shape, im.values, im.requires_grad);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : impl("all_finite").values) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace stob
