#include "stob/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "stob/random.hpp"

namespace stob {

namespace {

double eval_scalar(const std::function<Tensor<double>(Tape<double>*)>& loss_fn) {
  const double v = loss_fn(nullptr).item();
  if (!std::isfinite(v)) {
    throw NumericError("finite_diff_check: loss is non-finite");
  }
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(
    const std::function<Tensor<double>(Tape<double>*)>& loss_fn,
    std::span<Parameter<double>* const> params, double eps,
    std::int64_t coords_per_param, std::uint64_t seed) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw ConfigError("finite_diff_check: eps must lie in [1e-6, 1e-3]");
  }
  if (params.empty()) {
    throw ContractError("finite_diff_check: no parameters to check");
  }

  // Analytic gradients from one taped evaluation.
  for (Parameter<double>* p : params) p->value.zero_grad();
  {
    Tape<double> tape;
    Tensor<double> loss = loss_fn(&tape);
    if (!std::isfinite(loss.item())) {
      throw NumericError("finite_diff_check: loss is non-finite");
    }
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter<double>* p : params) {
    if (p->value.grad_allocated()) {
      auto g = p->value.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back(static_cast<std::size_t>(p->value.size()), 0.0);
    }
  }

  Rng rng(mix_seed(seed, 0x9d2c5680ULL));
  GradCheckResult result;

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    const std::int64_t n = p.value.size();

    std::vector<std::int64_t> coords;
    if (coords_per_param <= 0 || coords_per_param >= n) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      coords.reserve(static_cast<std::size_t>(coords_per_param));
      for (std::int64_t k = 0; k < coords_per_param; ++k) coords.push_back(rng.index(n));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    auto values = p.value.mutable_data();
    for (std::int64_t idx : coords) {
      const double saved = values[static_cast<std::size_t>(idx)];
      values[static_cast<std::size_t>(idx)] = saved + eps;
      const double up = eval_scalar(loss_fn);
      values[static_cast<std::size_t>(idx)] = saved - eps;
      const double down = eval_scalar(loss_fn);
      values[static_cast<std::size_t>(idx)] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][static_cast<std::size_t>(idx)];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = idx;
        result.analytic_at_worst = a;
        result.numeric_at_worst = numeric;
      }
    }
  }
  return result;
}

}  // namespace stob
