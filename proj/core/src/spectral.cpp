#include "stob/spectral.hpp"

#include <cmath>

#include "stob/ops.hpp"
#include "stob/random.hpp"

namespace stob {

namespace {

template <typename T>
double norm2(const Tensor<T>& t) {
  double acc = 0.0;
  for (T v : t.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

template <typename T>
void scale_in_place(Tensor<T>& t, double c) {
  for (T& v : t.mutable_data()) v = static_cast<T>(static_cast<double>(v) * c);
}

}  // namespace

template <typename T>
SpectralNormResult spectral_norm(const Tensor<T>& weight, const ConvGeometry& geom,
                                 double tol, std::int64_t max_iters,
                                 std::uint64_t seed) {
  if (weight.rank() != 4) {
    throw ShapeError("spectral_norm: weight must be rank 4, got " +
                     shape_str(weight.shape()));
  }
  const std::int64_t ci = weight.dim(1);
  const std::int64_t kh = weight.dim(2);
  const std::int64_t kw = weight.dim(3);
  const std::int64_t oh = conv_out_extent(geom.height, kh, geom.stride, geom.padding);
  const std::int64_t ow = conv_out_extent(geom.width, kw, geom.stride, geom.padding);
  // Remainders lost to the forward floor division; fed back to the transposed
  // pass as output padding so the adjoint lands on the original grid.
  const std::int64_t oph = geom.height - ((oh - 1) * geom.stride - 2 * geom.padding + kh);
  const std::int64_t opw = geom.width - ((ow - 1) * geom.stride - 2 * geom.padding + kw);

  Tensor<T> v = Tensor<T>::zeros({1, ci, geom.height, geom.width});
  {
    Rng rng(mix_seed(seed, 0x5be0cd19ULL));
    fill_normal(v, rng, 0.0, 1.0);
  }
  double vn = norm2(v);
  if (vn == 0.0) return {0.0, true, 0};
  scale_in_place(v, 1.0 / vn);

  SpectralNormResult result;
  double prev = 0.0;
  for (std::int64_t it = 1; it <= max_iters; ++it) {
    Tensor<T> u = conv2d<T>(nullptr, v, weight, nullptr, geom.stride, geom.padding);
    // Output padding restores the exact input extent, so the transposed pass
    // is the full adjoint even when the forward conv floor-divides.
    Tensor<T> back = conv_transpose2d<T>(nullptr, u, weight, nullptr, geom.stride,
                                         geom.padding, oph, opw);
    const double back_norm = norm2(back);
    const double sigma = std::sqrt(back_norm);  // ‖A^T A v‖ ≈ σ² for unit v
    result.value = sigma;
    result.iterations = it;
    if (back_norm == 0.0) {
      result.value = 0.0;
      result.converged = true;
      return result;
    }
    scale_in_place(back, 1.0 / back_norm);
    v = back;
    if (it > 1 && std::abs(sigma - prev) <= tol * std::max(sigma, 1e-30)) {
      result.converged = true;
      return result;
    }
    prev = sigma;
  }
  result.converged = false;
  return result;
}

template SpectralNormResult spectral_norm<float>(const Tensor<float>&,
                                                 const ConvGeometry&, double,
                                                 std::int64_t, std::uint64_t);
template SpectralNormResult spectral_norm<double>(const Tensor<double>&,
                                                  const ConvGeometry&, double,
                                                  std::int64_t, std::uint64_t);

}  // namespace stob
