#include "stob/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

namespace stob {
namespace {

using i64 = std::int64_t;

void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, float alpha,
          const float* a, i64 lda, const float* b, i64 ldb, float beta, float* c,
          i64 ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, double alpha,
          const double* a, i64 lda, const double* b, i64 ldb, double beta,
          double* c, i64 ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

// Unrolls conv patches of src (C, hs, ws) into a column block for a
// convolution with the given stride/padding whose output grid is (oh, ow).
// The destination matrix has `col_stride` columns per row; this sample's
// block starts at column `col_offset`. Out-of-image taps produce zeros.
// Writing sample blocks side by side lets one GEMM cover a whole batch.
template <typename T>
void im2col(const T* src, i64 c_in, i64 hs, i64 ws, i64 kh, i64 kw, i64 stride,
            i64 pad, i64 oh, i64 ow, T* col, i64 col_stride, i64 col_offset) {
  for (i64 c = 0; c < c_in; ++c) {
    for (i64 i = 0; i < kh; ++i) {
      for (i64 j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * col_stride + col_offset;
        for (i64 y = 0; y < oh; ++y) {
          const i64 sy = y * stride - pad + i;
          T* row = dst + y * ow;
          if (sy < 0 || sy >= hs) {
            std::memset(row, 0, static_cast<std::size_t>(ow) * sizeof(T));
            continue;
          }
          const T* srow = src + (c * hs + sy) * ws;
          for (i64 x = 0; x < ow; ++x) {
            const i64 sx = x * stride - pad + j;
            row[x] = (sx >= 0 && sx < ws) ? srow[sx] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates one sample's column block back into dst
// (C, hs, ws). dst is added to, not overwritten.
template <typename T>
void col2im(const T* col, i64 c_in, i64 hs, i64 ws, i64 kh, i64 kw, i64 stride,
            i64 pad, i64 oh, i64 ow, T* dst, i64 col_stride, i64 col_offset) {
  for (i64 c = 0; c < c_in; ++c) {
    for (i64 i = 0; i < kh; ++i) {
      for (i64 j = 0; j < kw; ++j) {
        const T* srcrow = col + ((c * kh + i) * kw + j) * col_stride + col_offset;
        for (i64 y = 0; y < oh; ++y) {
          const i64 sy = y * stride - pad + i;
          if (sy < 0 || sy >= hs) continue;
          T* drow = dst + (c * hs + sy) * ws;
          const T* srow = srcrow + y * ow;
          for (i64 x = 0; x < ow; ++x) {
            const i64 sx = x * stride - pad + j;
            if (sx >= 0 && sx < ws) drow[sx] += srow[x];
          }
        }
      }
    }
  }
}

// Copies between the (N, C, P) tensor layout and the (C, N*P) matrix layout
// whose sample blocks sit side by side.
template <typename T>
void gather_to_matrix(const T* tensor, i64 n, i64 c, i64 p, T* mat) {
  for (i64 b = 0; b < n; ++b) {
    for (i64 ch = 0; ch < c; ++ch) {
      std::memcpy(mat + ch * n * p + b * p, tensor + (b * c + ch) * p,
                  static_cast<std::size_t>(p) * sizeof(T));
    }
  }
}

template <typename T>
void scatter_from_matrix(const T* mat, i64 n, i64 c, i64 p, T* tensor) {
  for (i64 b = 0; b < n; ++b) {
    for (i64 ch = 0; ch < c; ++ch) {
      std::memcpy(tensor + (b * c + ch) * p, mat + ch * n * p + b * p,
                  static_cast<std::size_t>(p) * sizeof(T));
    }
  }
}

template <typename T>
void require_rank(const Tensor<T>& t, i64 rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

// Shared boilerplate: mark the output differentiable and append the node.
template <typename T, typename Fn>
void maybe_record(Tape<T>* tape, const char* op,
                  std::initializer_list<const Tensor<T>*> inputs,
                  Tensor<T>& out, Fn&& fn) {
  if (!tracing(tape, inputs)) return;
  out.set_requires_grad(true);
  std::vector<Tensor<T>> in;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined()) in.push_back(*t);
  }
  tape->record(op, std::move(in), out, std::forward<Fn>(fn));
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel,
                             std::int64_t stride, std::int64_t padding) {
  if (stride < 1) throw ConfigError("conv: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv: padding must be >= 0");
  if (in + 2 * padding < kernel) {
    throw ShapeError("conv: kernel " + std::to_string(kernel) +
                     " larger than padded input " + std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::int64_t conv_transpose_out_extent(std::int64_t in, std::int64_t kernel,
                                       std::int64_t stride, std::int64_t padding,
                                       std::int64_t output_padding) {
  if (stride < 1) throw ConfigError("conv_transpose: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv_transpose: padding must be >= 0");
  if (output_padding < 0 || output_padding >= stride) {
    throw ConfigError("conv_transpose: output_padding must be in [0, stride)");
  }
  const std::int64_t out = (in - 1) * stride - 2 * padding + kernel + output_padding;
  if (out < 1) {
    throw ShapeError("conv_transpose: non-positive output extent " + std::to_string(out));
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto ov = out.mutable_data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  maybe_record(tape, "add", {&a, &b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad()) b.accumulate_grad(g);
  });
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto ov = out.mutable_data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  maybe_record(tape, "sub", {&a, &b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad()) {
      std::vector<T> neg(g.begin(), g.end());
      for (T& v : neg) v = -v;
      b.accumulate_grad(neg);
    }
  });
  return out;
}

template <typename T>
Tensor<T> hadamard(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  const bool broadcast = [&] {
    if (a.shape() == b.shape()) return false;
    if (a.rank() == b.rank() + 1 &&
        Shape(a.shape().begin() + 1, a.shape().end()) == b.shape()) {
      return true;
    }
    throw ShapeError("hadamard: incompatible shapes " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }();

  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto ov = out.mutable_data();
  auto av = a.data();
  auto bv = b.data();
  const std::size_t bn = bv.size();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i % bn];

  maybe_record(tape, "hadamard", {&a, &b}, out, [a, b, out, broadcast]() mutable {
    auto g = out.grad();
    auto av2 = a.data();
    auto bv2 = b.data();
    const std::size_t bn2 = bv2.size();
    if (a.requires_grad()) {
      std::vector<T> da(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bv2[i % bn2];
      a.accumulate_grad(da);
    }
    if (b.requires_grad()) {
      std::vector<T> db(bn2, T(0));
      if (broadcast) {
        for (std::size_t i = 0; i < g.size(); ++i) db[i % bn2] += g[i] * av2[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * av2[i];
      }
      b.accumulate_grad(db);
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T c) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto ov = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * xv[i];
  maybe_record(tape, "scale", {&x}, out, [x, out, c]() mutable {
    auto g = out.grad();
    std::vector<T> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = c * g[i];
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, T slope) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto ov = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    ov[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
  }
  maybe_record(tape, "leaky_relu", {&x}, out, [x, out, slope]() mutable {
    auto g = out.grad();
    auto xv2 = x.data();
    std::vector<T> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] = xv2[i] > T(0) ? g[i] : slope * g[i];
    }
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto ov = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const T v = xv[i];
    if (v >= T(0)) {
      ov[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      ov[i] = e / (T(1) + e);
    }
  }
  maybe_record(tape, "sigmoid", {&x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto yv = out.data();
    std::vector<T> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] = g[i] * yv[i] * (T(1) - yv[i]);
    }
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> clamp(Tape<T>* tape, const Tensor<T>& x, T lo, T hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo must be <= hi");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto ov = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    ov[i] = xv[i] < lo ? lo : (xv[i] > hi ? hi : xv[i]);
  }
  maybe_record(tape, "clamp", {&x}, out, [x, out, lo, hi]() mutable {
    auto g = out.grad();
    auto xv2 = x.data();
    std::vector<T> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] = (xv2[i] >= lo && xv2[i] <= hi) ? g[i] : T(0);
    }
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> abs_val(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto ov = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::abs(xv[i]);
  maybe_record(tape, "abs", {&x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto xv2 = x.data();
    std::vector<T> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] = xv2[i] > T(0) ? g[i] : (xv2[i] < T(0) ? -g[i] : T(0));
    }
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  maybe_record(tape, "sum", {&x}, out, [x, out]() mutable {
    const T g = out.grad()[0];
    std::vector<T> dx(static_cast<std::size_t>(x.size()), g);
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> sum_squares(Tape<T>* tape, const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v * v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  maybe_record(tape, "sum_squares", {&x}, out, [x, out]() mutable {
    const T g = out.grad()[0];
    auto xv = x.data();
    std::vector<T> dx(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] = T(2) * g * xv[i];
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> sum_abs(Tape<T>* tape, const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += std::abs(v);
  Tensor<T> out = Tensor<T>::scalar(acc);
  maybe_record(tape, "sum_abs", {&x}, out, [x, out]() mutable {
    const T g = out.grad()[0];
    auto xv = x.data();
    std::vector<T> dx(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      dx[i] = xv[i] > T(0) ? g : (xv[i] < T(0) ? -g : T(0));
    }
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  auto xv = x.data();
  Tensor<T> out = Tensor<T>::from_data(std::move(new_shape),
                                       std::vector<T>(xv.begin(), xv.end()));
  maybe_record(tape, "reshape", {&x}, out, [x, out]() mutable {
    x.accumulate_grad(out.grad());
  });
  return out;
}

template <typename T>
Tensor<T> slice_frames(Tape<T>* tape, const Tensor<T>& x, std::int64_t start,
                       std::int64_t count) {
  if (x.rank() < 2) throw ShapeError("slice_frames: need rank >= 2, got " + shape_str(x.shape()));
  const i64 n = x.dim(0);
  const i64 t = x.dim(1);
  if (start < 0 || count < 1 || start + count > t) {
    throw ShapeError("slice_frames: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of bounds for axis of extent " +
                     std::to_string(t));
  }
  const i64 row = x.size() / (n * t);  // elements per frame
  Shape out_shape = x.shape();
  out_shape[1] = count;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  auto ov = out.mutable_data();
  auto xv = x.data();
  for (i64 b = 0; b < n; ++b) {
    const T* src = xv.data() + (b * t + start) * row;
    T* dst = ov.data() + b * count * row;
    std::memcpy(dst, src, static_cast<std::size_t>(count * row) * sizeof(T));
  }
  maybe_record(tape, "slice_frames", {&x}, out, [x, out, n, t, row, start, count]() mutable {
    auto g = out.grad();
    std::vector<T> dx(static_cast<std::size_t>(x.size()), T(0));
    for (i64 b = 0; b < n; ++b) {
      const T* src = g.data() + b * count * row;
      T* dst = dx.data() + (b * t + start) * row;
      std::memcpy(dst, src, static_cast<std::size_t>(count * row) * sizeof(T));
    }
    x.accumulate_grad(dx);
  });
  return out;
}

template <typename T>
Tensor<T> select_frame(Tape<T>* tape, const Tensor<T>& x, std::int64_t index) {
  Tensor<T> sl = slice_frames(tape, x, index, 1);
  Shape squeezed = x.shape();
  squeezed.erase(squeezed.begin() + 1);
  return reshape(tape, sl, std::move(squeezed));
}

template <typename T>
Tensor<T> stack_frames(Tape<T>* tape, std::span<const Tensor<T>> frames) {
  if (frames.empty()) throw ContractError("stack_frames: no inputs");
  const Shape& base = frames[0].shape();
  if (frames[0].rank() < 1) throw ShapeError("stack_frames: inputs need a batch axis");
  for (const Tensor<T>& f : frames) require_same_shape(base, f.shape(), "stack_frames");

  const i64 n = base[0];
  const i64 k = static_cast<i64>(frames.size());
  const i64 row = frames[0].size() / n;
  Shape out_shape;
  out_shape.push_back(n);
  out_shape.push_back(k);
  out_shape.insert(out_shape.end(), base.begin() + 1, base.end());
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  auto ov = out.mutable_data();
  for (i64 j = 0; j < k; ++j) {
    auto fv = frames[j].data();
    for (i64 b = 0; b < n; ++b) {
      std::memcpy(ov.data() + (b * k + j) * row, fv.data() + b * row,
                  static_cast<std::size_t>(row) * sizeof(T));
    }
  }

  bool any_grad = tape != nullptr;
  if (any_grad) {
    any_grad = false;
    for (const Tensor<T>& f : frames) any_grad = any_grad || f.requires_grad();
  }
  if (any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> inputs(frames.begin(), frames.end());
    tape->record("stack_frames", inputs, out, [inputs, out, n, k, row]() mutable {
      auto g = out.grad();
      std::vector<T> df(static_cast<std::size_t>(n * row));
      for (i64 j = 0; j < k; ++j) {
        if (!inputs[static_cast<std::size_t>(j)].requires_grad()) continue;
        for (i64 b = 0; b < n; ++b) {
          std::memcpy(df.data() + b * row, g.data() + (b * k + j) * row,
                      static_cast<std::size_t>(row) * sizeof(T));
        }
        inputs[static_cast<std::size_t>(j)].accumulate_grad(df);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>* bias, std::int64_t stride, std::int64_t padding) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const i64 n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const i64 co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != ci) {
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) +
                     " input channels, input has " + std::to_string(ci));
  }
  if (bias != nullptr && bias->defined()) {
    require_rank(*bias, 1, "conv2d bias");
    if (bias->dim(0) != co) {
      throw ShapeError("conv2d: bias extent " + std::to_string(bias->dim(0)) +
                       " != output channels " + std::to_string(co));
    }
  }
  const i64 oh = conv_out_extent(h, kh, stride, padding);
  const i64 ow = conv_out_extent(wd, kw, stride, padding);
  const i64 kdim = ci * kh * kw;
  const i64 patches = oh * ow;

  const i64 cols = n * patches;

  Tensor<T> out = Tensor<T>::zeros({n, co, oh, ow});
  {
    auto ov = out.mutable_data();
    auto xv = x.data();
    auto wv = w.data();
    std::vector<T> col(static_cast<std::size_t>(kdim * cols));
    std::vector<T> out_mat(static_cast<std::size_t>(co * cols));
    for (i64 b = 0; b < n; ++b) {
      im2col(xv.data() + b * ci * h * wd, ci, h, wd, kh, kw, stride, padding, oh,
             ow, col.data(), cols, b * patches);
    }
    gemm(false, false, co, cols, kdim, T(1), wv.data(), kdim, col.data(), cols,
         T(0), out_mat.data(), cols);
    scatter_from_matrix(out_mat.data(), n, co, patches, ov.data());
    if (bias != nullptr && bias->defined()) {
      auto bv = bias->data();
      for (i64 b = 0; b < n; ++b) {
        for (i64 c = 0; c < co; ++c) {
          T* dst = ov.data() + (b * co + c) * patches;
          const T bval = bv[static_cast<std::size_t>(c)];
          for (i64 p = 0; p < patches; ++p) dst[p] += bval;
        }
      }
    }
  }

  Tensor<T> bias_t = (bias != nullptr && bias->defined()) ? *bias : Tensor<T>();
  maybe_record(
      tape, "conv2d", {&x, &w, bias}, out,
      [x, w, bias_t, out, n, ci, h, wd, co, kh, kw, stride, padding, oh, ow, kdim,
       patches, cols]() mutable {
        auto g = out.grad();
        auto xv = x.data();
        auto wv = w.data();

        if (bias_t.defined() && bias_t.requires_grad()) {
          std::vector<T> db(static_cast<std::size_t>(co), T(0));
          for (i64 b = 0; b < n; ++b) {
            for (i64 c = 0; c < co; ++c) {
              const T* src = g.data() + (b * co + c) * patches;
              T acc = T(0);
              for (i64 p = 0; p < patches; ++p) acc += src[p];
              db[static_cast<std::size_t>(c)] += acc;
            }
          }
          bias_t.accumulate_grad(db);
        }

        const bool need_x = x.requires_grad();
        const bool need_w = w.requires_grad();
        if (!need_x && !need_w) return;

        std::vector<T> gy_mat(static_cast<std::size_t>(co * cols));
        gather_to_matrix(g.data(), n, co, patches, gy_mat.data());

        if (need_w) {
          std::vector<T> col(static_cast<std::size_t>(kdim * cols));
          for (i64 b = 0; b < n; ++b) {
            im2col(xv.data() + b * ci * h * wd, ci, h, wd, kh, kw, stride,
                   padding, oh, ow, col.data(), cols, b * patches);
          }
          std::vector<T> dw(static_cast<std::size_t>(co * kdim));
          gemm(false, true, co, kdim, cols, T(1), gy_mat.data(), cols, col.data(),
               cols, T(0), dw.data(), kdim);
          w.accumulate_grad(dw);
        }

        if (need_x) {
          std::vector<T> dcol(static_cast<std::size_t>(kdim * cols));
          gemm(true, false, kdim, cols, co, T(1), wv.data(), kdim, gy_mat.data(),
               cols, T(0), dcol.data(), cols);
          std::vector<T> dx(static_cast<std::size_t>(x.size()), T(0));
          for (i64 b = 0; b < n; ++b) {
            col2im(dcol.data(), ci, h, wd, kh, kw, stride, padding, oh, ow,
                   dx.data() + b * ci * h * wd, cols, b * patches);
          }
          x.accumulate_grad(dx);
        }
      });
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>* bias, std::int64_t stride,
                           std::int64_t padding, std::int64_t output_padding) {
  return conv_transpose2d(tape, x, w, bias, stride, padding, output_padding,
                          output_padding);
}

template <typename T>
Tensor<T> conv_transpose2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>* bias, std::int64_t stride,
                           std::int64_t padding, std::int64_t output_padding_h,
                           std::int64_t output_padding_w) {
  require_rank(x, 4, "conv_transpose2d input");
  require_rank(w, 4, "conv_transpose2d weight");
  const i64 n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const i64 co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(0) != ci) {
    throw ShapeError("conv_transpose2d: weight expects " + std::to_string(w.dim(0)) +
                     " input channels, input has " + std::to_string(ci));
  }
  if (bias != nullptr && bias->defined()) {
    require_rank(*bias, 1, "conv_transpose2d bias");
    if (bias->dim(0) != co) {
      throw ShapeError("conv_transpose2d: bias extent " +
                       std::to_string(bias->dim(0)) + " != output channels " +
                       std::to_string(co));
    }
  }
  const i64 oh = conv_transpose_out_extent(h, kh, stride, padding, output_padding_h);
  const i64 ow = conv_transpose_out_extent(wd, kw, stride, padding, output_padding_w);
  // Conv view: a stride-s convolution maps (co, oh, ow) -> (ci, h, wd); this
  // op is its adjoint, so im2col/col2im run over the (oh, ow) image with the
  // (h, wd) grid.
  const i64 kdim = co * kh * kw;
  const i64 patches = h * wd;

  const i64 cols = n * patches;

  Tensor<T> out = Tensor<T>::zeros({n, co, oh, ow});
  {
    auto ov = out.mutable_data();
    auto xv = x.data();
    auto wv = w.data();
    std::vector<T> x_mat(static_cast<std::size_t>(ci * cols));
    gather_to_matrix(xv.data(), n, ci, patches, x_mat.data());
    std::vector<T> col(static_cast<std::size_t>(kdim * cols));
    gemm(true, false, kdim, cols, ci, T(1), wv.data(), kdim, x_mat.data(), cols,
         T(0), col.data(), cols);
    for (i64 b = 0; b < n; ++b) {
      col2im(col.data(), co, oh, ow, kh, kw, stride, padding, h, wd,
             ov.data() + b * co * oh * ow, cols, b * patches);
    }
    if (bias != nullptr && bias->defined()) {
      auto bv = bias->data();
      const i64 spatial = oh * ow;
      for (i64 b = 0; b < n; ++b) {
        for (i64 c = 0; c < co; ++c) {
          T* dst = ov.data() + (b * co + c) * spatial;
          const T bval = bv[static_cast<std::size_t>(c)];
          for (i64 p = 0; p < spatial; ++p) dst[p] += bval;
        }
      }
    }
  }

  Tensor<T> bias_t = (bias != nullptr && bias->defined()) ? *bias : Tensor<T>();
  maybe_record(
      tape, "conv_transpose2d", {&x, &w, bias}, out,
      [x, w, bias_t, out, n, ci, h, wd, co, kh, kw, stride, padding, oh, ow, kdim,
       patches, cols]() mutable {
        auto g = out.grad();
        auto xv = x.data();
        auto wv = w.data();

        if (bias_t.defined() && bias_t.requires_grad()) {
          const i64 spatial = oh * ow;
          std::vector<T> db(static_cast<std::size_t>(co), T(0));
          for (i64 b = 0; b < n; ++b) {
            for (i64 c = 0; c < co; ++c) {
              const T* src = g.data() + (b * co + c) * spatial;
              T acc = T(0);
              for (i64 p = 0; p < spatial; ++p) acc += src[p];
              db[static_cast<std::size_t>(c)] += acc;
            }
          }
          bias_t.accumulate_grad(db);
        }

        const bool need_x = x.requires_grad();
        const bool need_w = w.requires_grad();
        if (!need_x && !need_w) return;

        std::vector<T> col(static_cast<std::size_t>(kdim * cols));
        for (i64 b = 0; b < n; ++b) {
          im2col(g.data() + b * co * oh * ow, co, oh, ow, kh, kw, stride, padding,
                 h, wd, col.data(), cols, b * patches);
        }
        if (need_x) {
          std::vector<T> dx_mat(static_cast<std::size_t>(ci * cols));
          gemm(false, false, ci, cols, kdim, T(1), wv.data(), kdim, col.data(),
               cols, T(0), dx_mat.data(), cols);
          std::vector<T> dx(static_cast<std::size_t>(x.size()));
          scatter_from_matrix(dx_mat.data(), n, ci, patches, dx.data());
          x.accumulate_grad(dx);
        }
        if (need_w) {
          std::vector<T> x_mat(static_cast<std::size_t>(ci * cols));
          gather_to_matrix(xv.data(), n, ci, patches, x_mat.data());
          std::vector<T> dw(static_cast<std::size_t>(w.size()));
          gemm(false, true, ci, kdim, cols, T(1), x_mat.data(), cols, col.data(),
               cols, T(0), dw.data(), kdim);
          w.accumulate_grad(dw);
        }
      });
  return out;
}

template <typename T>
Tensor<T> group_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, std::int64_t groups, T eps) {
  require_rank(x, 4, "group_norm input");
  const i64 n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  if (groups < 1 || c % groups != 0) {
    throw ConfigError("group_norm: groups " + std::to_string(groups) +
                      " must divide channels " + std::to_string(c));
  }
  require_rank(gamma, 1, "group_norm gamma");
  require_rank(beta, 1, "group_norm beta");
  if (gamma.dim(0) != c || beta.dim(0) != c) {
    throw ShapeError("group_norm: affine extents " + shape_str(gamma.shape()) +
                     ", " + shape_str(beta.shape()) + " do not match channels " +
                     std::to_string(c));
  }
  if (!(eps > T(0))) throw ConfigError("group_norm: eps must be positive");

  const i64 cg = c / groups;       // channels per group
  const i64 m = cg * h * wd;       // elements per (sample, group)
  const i64 spatial = h * wd;

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  // Normalized values and inverse standard deviations are needed again by
  // the backward pass; shared ownership keeps them alive on the tape.
  auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(x.size()));
  auto istd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n * groups));
  {
    auto ov = out.mutable_data();
    auto xv = x.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    for (i64 b = 0; b < n; ++b) {
      for (i64 gidx = 0; gidx < groups; ++gidx) {
        const i64 base = (b * c + gidx * cg) * spatial;
        double mean = 0.0;
        for (i64 i = 0; i < m; ++i) mean += static_cast<double>(xv[base + i]);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (i64 i = 0; i < m; ++i) {
          const double d = static_cast<double>(xv[base + i]) - mean;
          var += d * d;
        }
        var /= static_cast<double>(m);
        const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        (*istd)[static_cast<std::size_t>(b * groups + gidx)] = is;
        for (i64 i = 0; i < m; ++i) {
          const i64 ch = gidx * cg + i / spatial;
          const T xh = (xv[base + i] - static_cast<T>(mean)) * is;
          (*xhat)[static_cast<std::size_t>(base + i)] = xh;
          ov[base + i] = gv[static_cast<std::size_t>(ch)] * xh +
                         bv[static_cast<std::size_t>(ch)];
        }
      }
    }
  }

  maybe_record(
      tape, "group_norm", {&x, &gamma, &beta}, out,
      [x, gamma, beta, out, xhat, istd, n, c, groups, cg, m, spatial]() mutable {
        auto g = out.grad();
        auto gv = gamma.data();

        if (gamma.requires_grad() || beta.requires_grad()) {
          std::vector<T> dgamma(static_cast<std::size_t>(c), T(0));
          std::vector<T> dbeta(static_cast<std::size_t>(c), T(0));
          for (i64 b = 0; b < n; ++b) {
            for (i64 ch = 0; ch < c; ++ch) {
              const i64 base = (b * c + ch) * spatial;
              T dg = T(0), db = T(0);
              for (i64 p = 0; p < spatial; ++p) {
                dg += g[base + p] * (*xhat)[static_cast<std::size_t>(base + p)];
                db += g[base + p];
              }
              dgamma[static_cast<std::size_t>(ch)] += dg;
              dbeta[static_cast<std::size_t>(ch)] += db;
            }
          }
          if (gamma.requires_grad()) gamma.accumulate_grad(dgamma);
          if (beta.requires_grad()) beta.accumulate_grad(dbeta);
        }

        if (x.requires_grad()) {
          std::vector<T> dx(static_cast<std::size_t>(x.size()));
          for (i64 b = 0; b < n; ++b) {
            for (i64 gidx = 0; gidx < groups; ++gidx) {
              const i64 base = (b * c + gidx * cg) * spatial;
              const T is = (*istd)[static_cast<std::size_t>(b * groups + gidx)];
              double sum_dxhat = 0.0;
              double sum_dxhat_xhat = 0.0;
              for (i64 i = 0; i < m; ++i) {
                const i64 ch = gidx * cg + i / spatial;
                const double dxh = static_cast<double>(g[base + i]) *
                                   static_cast<double>(gv[static_cast<std::size_t>(ch)]);
                sum_dxhat += dxh;
                sum_dxhat_xhat +=
                    dxh * static_cast<double>((*xhat)[static_cast<std::size_t>(base + i)]);
              }
              const double inv_m = 1.0 / static_cast<double>(m);
              for (i64 i = 0; i < m; ++i) {
                const i64 ch = gidx * cg + i / spatial;
                const double dxh = static_cast<double>(g[base + i]) *
                                   static_cast<double>(gv[static_cast<std::size_t>(ch)]);
                const double xh =
                    static_cast<double>((*xhat)[static_cast<std::size_t>(base + i)]);
                dx[static_cast<std::size_t>(base + i)] = static_cast<T>(
                    static_cast<double>(is) *
                    (dxh - inv_m * sum_dxhat - xh * inv_m * sum_dxhat_xhat));
              }
            }
          }
          x.accumulate_grad(dx);
        }
      });
  return out;
}

#define STOB_INSTANTIATE_OPS(T)                                                     \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> sub<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> hadamard<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);                       \
  template Tensor<T> leaky_relu<T>(Tape<T>*, const Tensor<T>&, T);                  \
  template Tensor<T> sigmoid<T>(Tape<T>*, const Tensor<T>&);                        \
  template Tensor<T> clamp<T>(Tape<T>*, const Tensor<T>&, T, T);                    \
  template Tensor<T> abs_val<T>(Tape<T>*, const Tensor<T>&);                        \
  template Tensor<T> sum_all<T>(Tape<T>*, const Tensor<T>&);                        \
  template Tensor<T> sum_squares<T>(Tape<T>*, const Tensor<T>&);                    \
  template Tensor<T> sum_abs<T>(Tape<T>*, const Tensor<T>&);                        \
  template Tensor<T> reshape<T>(Tape<T>*, const Tensor<T>&, Shape);                 \
  template Tensor<T> slice_frames<T>(Tape<T>*, const Tensor<T>&, std::int64_t,      \
                                     std::int64_t);                                 \
  template Tensor<T> select_frame<T>(Tape<T>*, const Tensor<T>&, std::int64_t);     \
  template Tensor<T> stack_frames<T>(Tape<T>*, std::span<const Tensor<T>>);         \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,        \
                               const Tensor<T>*, std::int64_t, std::int64_t);       \
  template Tensor<T> conv_transpose2d<T>(Tape<T>*, const Tensor<T>&,                \
                                         const Tensor<T>&, const Tensor<T>*,        \
                                         std::int64_t, std::int64_t, std::int64_t); \
  template Tensor<T> conv_transpose2d<T>(Tape<T>*, const Tensor<T>&,                \
                                         const Tensor<T>&, const Tensor<T>*,        \
                                         std::int64_t, std::int64_t, std::int64_t,  \
                                         std::int64_t);                             \
  template Tensor<T> group_norm<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,    \
                                   const Tensor<T>&, std::int64_t, T);

STOB_INSTANTIATE_OPS(float)
STOB_INSTANTIATE_OPS(double)
#undef STOB_INSTANTIATE_OPS

}  // namespace stob
