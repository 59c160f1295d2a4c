#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stob/tape.hpp"
#include "stob/tensor.hpp"

namespace stob {

/// Outcome of a finite-difference gradient comparison.
struct GradCheckResult {
  double max_rel_error = 0.0;   // worst coordinate over all parameters
  std::string worst_param;      // name of the parameter holding it
  std::int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::int64_t coords_checked = 0;
};

/// Compares reverse-mode gradients against central finite differences.
///
/// Picking eps trades truncation against roundoff: activation kinks and
/// normalization curvature favor a small step, while coordinates whose true
/// gradient is zero (conv biases swallowed by their group norm) only see the
/// rounding noise of the loss, which the division by 2·eps amplifies.
/// Around 1e-5 both effects stay below a 1e-5 relative-error gate for the
/// shipped configurations.
///
/// `loss_fn` evaluates the scalar loss from the current parameter values; it
/// receives a tape when the analytic gradient is wanted and nullptr for the
/// plain evaluations used by the differencing. Gradients are checked in
/// double precision only (the perturbations drown in float rounding).
///
/// `coords_per_param` limits how many coordinates of each parameter are
/// probed (chosen deterministically from `seed`); pass 0 to probe all of
/// them. Relative error for a coordinate is
///   |analytic - numeric| / max(1, |analytic|, |numeric|),
/// so tiny gradients are compared absolutely and large ones relatively.
///
/// Throws ConfigError when eps is outside [1e-6, 1e-3] and NumericError when
/// the loss evaluates to a non-finite value.
GradCheckResult finite_diff_check(
    const std::function<Tensor<double>(Tape<double>*)>& loss_fn,
    std::span<Parameter<double>* const> params, double eps,
    std::int64_t coords_per_param = 0, std::uint64_t seed = 0);

}  // namespace stob
