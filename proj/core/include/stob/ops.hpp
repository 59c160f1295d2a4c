#pragma once

#include <span>
#include <vector>

#include "stob/tape.hpp"
#include "stob/tensor.hpp"

namespace stob {

// Differentiable operations. Every function takes the tape first; passing a
// null tape (or inputs that do not require gradients) runs the forward pass
// only. Outputs are fresh tensors whose requires_grad flag is set exactly
// when the operation was recorded.

/// Elementwise sum; shapes must match.
template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise difference a - b; shapes must match.
template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product. Shapes must either match exactly, or `b` may omit
/// the leading (batch) axis of `a`, in which case it multiplies every batch
/// element (and its gradient sums over the batch).
template <typename T>
Tensor<T> hadamard(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

/// Multiplication by a compile-time constant c.
template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T c);

/// Leaky rectifier: x for x > 0, slope * x otherwise. The derivative at
/// exactly zero is taken to be `slope`.
template <typename T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, T slope);

/// Logistic sigmoid, numerically stable for large |x|.
template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x);

/// Clamps values to [lo, hi]. The subgradient is 1 inside the closed
/// interval and 0 outside.
template <typename T>
Tensor<T> clamp(Tape<T>* tape, const Tensor<T>& x, T lo, T hi);

/// Elementwise absolute value; the subgradient at zero is 0.
template <typename T>
Tensor<T> abs_val(Tape<T>* tape, const Tensor<T>& x);

/// Scalar sum of all elements.
template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x);

/// Scalar sum of squared elements (Frobenius norm squared).
template <typename T>
Tensor<T> sum_squares(Tape<T>* tape, const Tensor<T>& x);

/// Scalar sum of absolute values (entrywise L1 norm).
template <typename T>
Tensor<T> sum_abs(Tape<T>* tape, const Tensor<T>& x);

/// Same data, new extents; the element count must be preserved.
template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape new_shape);

/// Slices `count` entries starting at `start` along axis 1 (the time /
/// group axis of (N, T, ...) tensors).
template <typename T>
Tensor<T> slice_frames(Tape<T>* tape, const Tensor<T>& x, std::int64_t start,
                       std::int64_t count);

/// Removes axis 1: picks entry `index`, returning (N, ...).
template <typename T>
Tensor<T> select_frame(Tape<T>* tape, const Tensor<T>& x, std::int64_t index);

/// Stacks equally shaped (N, ...) tensors into (N, K, ...) along a new
/// axis 1.
template <typename T>
Tensor<T> stack_frames(Tape<T>* tape, std::span<const Tensor<T>> frames);

/// 2-d cross-correlation with square stride/padding.
/// x: (N, Ci, H, W); w: (Co, Ci, kh, kw); optional bias (Co).
/// Output: (N, Co, Ho, Wo) with Ho = (H + 2p - kh) / stride + 1 (floored).
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>* bias, std::int64_t stride, std::int64_t padding);

/// Transposed 2-d convolution (adjoint of conv2d in its spatial map).
/// x: (N, Ci, H, W); w: (Ci, Co, kh, kw); optional bias (Co).
/// Output: (N, Co, Ho, Wo) with Ho = (H - 1) * stride - 2p + kh + output_padding.
/// Requires 0 <= output_padding < stride.
template <typename T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>* bias, std::int64_t stride,
                           std::int64_t padding, std::int64_t output_padding);

/// As above with separate output padding per spatial axis (needed when a
/// decoder mirrors a non-square encoder geometry).
template <typename T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>* bias, std::int64_t stride,
                           std::int64_t padding, std::int64_t output_padding_h,
                           std::int64_t output_padding_w);

/// Group normalization over (N, C, H, W): statistics are per sample and per
/// channel group (biased variance), followed by a per-channel affine map.
/// gamma and beta have shape (C); `groups` must divide C.
template <typename T>
Tensor<T> group_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, std::int64_t groups, T eps);

/// Output spatial extent of conv2d along one axis.
std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel,
                             std::int64_t stride, std::int64_t padding);
/// Output spatial extent of conv_transpose2d along one axis.
std::int64_t conv_transpose_out_extent(std::int64_t in, std::int64_t kernel,
                                       std::int64_t stride, std::int64_t padding,
                                       std::int64_t output_padding);

}  // namespace stob
