#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stob/errors.hpp"

namespace stob {

/// Dense row-major extents. Axis order follows the (N, C, H, W) /
/// (N, T, C, H, W) conventions used throughout the library.
using Shape = std::vector<std::int64_t>;

/// Product of all extents; 1 for a rank-0 (scalar) shape.
std::int64_t numel(const Shape& shape);

/// Human readable form, e.g. "(2, 3, 16, 16)".
std::string shape_str(const Shape& shape);

/// Throws ShapeError unless the two shapes are identical. `what` names the
/// operation for the error message.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Dense n-dimensional array with an optional gradient buffer.
///
/// Tensor is a cheap value-semantic handle: copies share the underlying
/// storage. Values are written during construction, initialization and
/// optimizer updates; inside a differentiable computation new tensors are
/// produced instead of mutating existing ones, so the tape can replay the
/// computation backwards. Gradient buffers are allocated lazily on first
/// accumulation and always match the tensor's shape.
template <typename T>
class Tensor {
 public:
  /// An empty handle; most operations on it throw.
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  /// Takes ownership of `values`; sizes must match the shape exactly.
  static Tensor from_data(Shape shape, std::vector<T> values,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t size() const;
  /// Extent along axis `i`; negative indices count from the back.
  std::int64_t dim(std::int64_t i) const;

  std::span<const T> data() const;
  /// Mutable view of the values. Intended for fills, initializers and
  /// optimizer updates only -- never for tensors already recorded on a tape.
  std::span<T> mutable_data();

  bool requires_grad() const;
  void set_requires_grad(bool value);

  /// True once a gradient buffer exists (i.e. something accumulated into it).
  bool grad_allocated() const;
  /// Gradient values; throws ContractError if no gradient was accumulated.
  std::span<const T> grad() const;
  /// Adds `delta` elementwise into the gradient buffer, allocating it
  /// (zero-filled) on first use. Gradients are shared-handle metadata, so
  /// accumulation works through const handles (backward passes hold them).
  void accumulate_grad(std::span<const T> delta) const;
  /// Drops the gradient buffer (next accumulation starts from zero).
  void zero_grad() const;

  /// Value of a rank-0 or single-element tensor.
  T item() const;
  /// Convenience element access for tests; row-major index arithmetic.
  T at(std::initializer_list<std::int64_t> index) const;

  /// Deep copy of the values with gradient tracking disabled.
  Tensor detach_copy() const;
  /// Deep copy of values (keeps requires_grad, drops any gradient).
  Tensor clone() const;

  /// True when both handles share the same storage.
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  /// True if every value is finite.
  bool all_finite() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  const Impl& impl(const char* what) const;
  Impl& impl(const char* what);

  std::shared_ptr<Impl> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

/// A named, trainable tensor. Names are unique within a model and give
/// checkpoints and optimizer state a stable identity.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

}  // namespace stob
