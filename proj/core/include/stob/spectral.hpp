#pragma once

#include <cstdint>

#include "stob/tensor.hpp"

namespace stob {

/// Geometry that turns a conv weight into a concrete linear operator: the
/// operator maps a (Ci, H, W) image to the (Co, Ho, Wo) output of the
/// convolution with this stride and padding.
struct ConvGeometry {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};

struct SpectralNormResult {
  double value = 0.0;        // largest singular value estimate
  bool converged = false;    // relative change fell below tolerance
  std::int64_t iterations = 0;
};

/// Largest singular value of the convolution-as-linear-operator, computed by
/// power iteration on A^T A (alternating conv and its adjoint). The start
/// vector is seeded, so results are reproducible; if the relative change in
/// the estimate does not fall below `tol` within `max_iters`, the best
/// estimate is returned with converged = false.
template <typename T>
SpectralNormResult spectral_norm(const Tensor<T>& weight, const ConvGeometry& geom,
                                 double tol = 1e-4, std::int64_t max_iters = 200,
                                 std::uint64_t seed = 0);

}  // namespace stob
