#include "stob/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "stob/errors.hpp"

namespace stob {

namespace {

using i64 = std::int64_t;

/// Copies the selected rows of a (N, ...) tensor into a fresh batch tensor.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const i64> rows) {
  Shape shape = src.shape();
  shape[0] = static_cast<i64>(rows.size());
  Tensor<T> out = Tensor<T>::zeros(shape);
  const i64 row_size = src.size() / src.dim(0);
  auto sv = src.data();
  auto ov = out.mutable_data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const T* from = sv.data() + rows[r] * row_size;
    std::copy(from, from + row_size, ov.data() + static_cast<i64>(r) * row_size);
  }
  return out;
}

template <typename T>
Tensor<T> mean_squared_sum(Tape<T>* tape, std::span<const Tensor<T>> preds,
                           std::span<const Tensor<T>> targets, double norm) {
  Tensor<T> acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Tensor<T> term = sum_squares(tape, sub(tape, preds[i], targets[i]));
    acc = (i == 0) ? term : add(tape, acc, term);
  }
  return scale(tape, acc, static_cast<T>(1.0 / norm));
}

}  // namespace

void LossWeights::validate() const {
  if (lambda0 < 0 || lambda1 < 0 || lambda2 < 0 || lambda3 < 0) {
    throw ConfigError("loss weights must be nonnegative");
  }
}

void AdamConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optimizer lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("optimizer eps must be positive");
}

template <typename T>
LossResult<T> compute_losses(Tape<T>* tape, const Tensor<T>& pred_frames,
                             const Tensor<T>& true_frames,
                             std::span<const LatentTriplet<T>> pred_latents,
                             std::span<const LatentTriplet<T>> target_latents,
                             const LossWeights& weights) {
  weights.validate();
  require_same_shape(pred_frames.shape(), true_frames.shape(), "compute_losses");
  if (pred_frames.rank() != 5) {
    throw ShapeError("compute_losses: expected (N, L, C, H, W) frames, got " +
                     shape_str(pred_frames.shape()));
  }
  const double n = static_cast<double>(pred_frames.dim(0));
  const double l = static_cast<double>(pred_frames.dim(1));

  Tensor<T> err = sub(tape, pred_frames, true_frames);
  Tensor<T> l_y = sum_squares(tape, err);
  if (weights.lambda0 > 0) {
    l_y = add(tape, l_y, scale(tape, sum_abs(tape, err),
                               static_cast<T>(weights.lambda0)));
  }
  l_y = scale(tape, l_y, static_cast<T>(1.0 / (n * l)));

  const bool any_latent =
      weights.lambda1 > 0 || weights.lambda2 > 0 || weights.lambda3 > 0;
  LossResult<T> result;
  result.values.l_y = static_cast<double>(l_y.item());
  Tensor<T> total = l_y;

  if (any_latent) {
    if (pred_latents.empty() || pred_latents.size() != target_latents.size()) {
      throw ContractError(
          "compute_losses: latent weights are positive but predicted/target "
          "latent lists are empty or mismatched");
    }
    const double q = static_cast<double>(pred_latents.size());
    auto collect = [&](auto member) {
      std::vector<Tensor<T>> preds, targets;
      preds.reserve(pred_latents.size());
      targets.reserve(target_latents.size());
      for (std::size_t i = 0; i < pred_latents.size(); ++i) {
        preds.push_back(pred_latents[i].*member);
        targets.push_back(target_latents[i].*member);
      }
      return mean_squared_sum<T>(tape, preds, targets, n * q);
    };
    if (weights.lambda1 > 0) {
      Tensor<T> l_x = collect(&LatentTriplet<T>::x);
      result.values.l_x = static_cast<double>(l_x.item());
      total = add(tape, total, scale(tape, l_x, static_cast<T>(weights.lambda1)));
    }
    if (weights.lambda2 > 0) {
      Tensor<T> l_z = collect(&LatentTriplet<T>::z);
      result.values.l_z = static_cast<double>(l_z.item());
      total = add(tape, total, scale(tape, l_z, static_cast<T>(weights.lambda2)));
    }
    if (weights.lambda3 > 0) {
      Tensor<T> l_xi = collect(&LatentTriplet<T>::xi);
      result.values.l_xi = static_cast<double>(l_xi.item());
      total = add(tape, total, scale(tape, l_xi, static_cast<T>(weights.lambda3)));
    }
  }

  result.total = total;
  result.values.total = static_cast<double>(total.item());
  return result;
}

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  if (params_.empty()) throw ContractError("Adam: empty parameter list");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter<T>* p : params_) {
    if (p == nullptr || !p->value.defined()) {
      throw ContractError("Adam: undefined parameter");
    }
    m_.emplace_back(static_cast<std::size_t>(p->value.size()), T(0));
    v_.emplace_back(static_cast<std::size_t>(p->value.size()), T(0));
  }
}

template <typename T>
void Adam<T>::register_skip() {
  ++consecutive_skips_;
  if (consecutive_skips_ >= 10) {
    throw NumericError("optimizer aborted after 10 consecutive skipped steps");
  }
}

template <typename T>
bool Adam<T>::step() {
  for (const Parameter<T>* p : params_) {
    if (!p->value.grad_allocated()) continue;
    for (T g : p->value.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        register_skip();
        return false;
      }
    }
  }

  const i64 t = ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter<T>& p = *params_[pi];
    auto values = p.value.mutable_data();
    const bool has_grad = p.value.grad_allocated();
    auto grads = has_grad ? p.value.grad() : std::span<const T>();
    std::vector<T>& m = m_[pi];
    std::vector<T>& v = v_[pi];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grads[i]) : 0.0;
      const double mu = config_.beta1 * static_cast<double>(m[i]) +
                        (1.0 - config_.beta1) * g;
      const double nu = config_.beta2 * static_cast<double>(v[i]) +
                        (1.0 - config_.beta2) * g * g;
      m[i] = static_cast<T>(mu);
      v[i] = static_cast<T>(nu);
      const double m_hat = static_cast<double>(m[i]) / bc1;
      const double v_hat = static_cast<double>(v[i]) / bc2;
      values[i] = static_cast<T>(static_cast<double>(values[i]) -
                                 config_.lr * m_hat /
                                     (std::sqrt(v_hat) + config_.eps));
    }
  }
  consecutive_skips_ = 0;
  return true;
}

template <typename T>
void Adam<T>::zero_grad() {
  for (Parameter<T>* p : params_) p->value.zero_grad();
}

template <typename T>
void Adam<T>::restore(std::int64_t step_count, std::vector<std::vector<T>> m,
                      std::vector<std::vector<T>> v) {
  if (step_count < 0) throw ContractError("Adam::restore: negative step count");
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw ContractError("Adam::restore: moment list size mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto want = static_cast<std::size_t>(params_[i]->value.size());
    if (m[i].size() != want || v[i].size() != want) {
      throw ContractError("Adam::restore: moment shape mismatch for parameter " +
                          params_[i]->name);
    }
  }
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
  consecutive_skips_ = 0;
}

template <typename T>
EpochStats train_epoch(ObserverModel<T>& model, const Tensor<T>& inputs,
                       const Tensor<T>& targets, const LossWeights& weights,
                       Adam<T>& optimizer, std::int64_t batch_size, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  weights.validate();
  if (inputs.rank() != 5 || targets.rank() != 5) {
    throw ShapeError("train_epoch: inputs and targets must be (N, T, C, H, W)");
  }
  const i64 n = inputs.dim(0);
  if (n < 1) throw ContractError("train_epoch: empty dataset");
  if (targets.dim(0) != n) {
    throw ShapeError("train_epoch: input/target sample counts differ (" +
                     std::to_string(n) + " vs " + std::to_string(targets.dim(0)) +
                     ")");
  }
  if (batch_size < 1) throw ConfigError("train_epoch: batch_size must be positive");
  const i64 horizon = targets.dim(1);
  const bool any_latent =
      weights.lambda1 > 0 || weights.lambda2 > 0 || weights.lambda3 > 0;

  std::vector<i64> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (i64 i = n - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.index(i + 1))]);
  }

  EpochStats stats;
  LossBreakdown sum;
  i64 finite_batches = 0;
  for (i64 begin = 0; begin < n; begin += batch_size) {
    const i64 count = std::min<i64>(batch_size, n - begin);
    const i64 batch_index = begin / batch_size;
    std::span<const i64> rows(order.data() + begin,
                              static_cast<std::size_t>(count));
    try {
      Tensor<T> bx = gather_rows(inputs, rows);
      Tensor<T> by = gather_rows(targets, rows);

      Tape<T> tape;
      Rollout<T> rollout = model.forecast_sequence(&tape, bx, horizon);
      std::vector<LatentTriplet<T>> pred_latents;
      std::vector<LatentTriplet<T>> target_latents;
      if (any_latent) {
        for (const RolloutStep<T>& step : rollout.steps) {
          if (step.kept) pred_latents.push_back(step.predicted);
        }
        target_latents = model.latent_targets(by);
      }
      LossResult<T> loss = compute_losses<T>(&tape, rollout.frames, by,
                                             pred_latents, target_latents, weights);

      ++stats.batches;
      if (!std::isfinite(loss.values.total)) {
        optimizer.register_skip();
        ++stats.skipped_steps;
        continue;
      }

      optimizer.zero_grad();
      tape.backward(loss.total);
      if (!optimizer.step()) {
        ++stats.skipped_steps;
        continue;
      }
      sum.l_y += loss.values.l_y;
      sum.l_x += loss.values.l_x;
      sum.l_z += loss.values.l_z;
      sum.l_xi += loss.values.l_xi;
      sum.total += loss.values.total;
      ++finite_batches;
    } catch (const NumericError& e) {
      throw NumericError("batch " + std::to_string(batch_index) + ": " + e.what());
    }
  }

  if (finite_batches > 0) {
    const double inv = 1.0 / static_cast<double>(finite_batches);
    stats.mean.l_y = sum.l_y * inv;
    stats.mean.l_x = sum.l_x * inv;
    stats.mean.l_z = sum.l_z * inv;
    stats.mean.l_xi = sum.l_xi * inv;
    stats.mean.total = sum.total * inv;
  }
  stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return stats;
}

MetricsCsv::MetricsCsv(const std::string& path) : path_(path) {
  out_.open(path, std::ios::out | std::ios::trunc);
  if (!out_) throw IoError("cannot open metrics log \"" + path + "\"");
  out_ << "epoch,L_y,L_x,L_z,L_xi,total,seconds\n";
  out_.precision(std::numeric_limits<double>::max_digits10);
}

void MetricsCsv::append(std::int64_t epoch, const LossBreakdown& row,
                        double seconds) {
  out_ << epoch << ',' << row.l_y << ',' << row.l_x << ',' << row.l_z << ','
       << row.l_xi << ',' << row.total << ',' << seconds << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing metrics log \"" + path_ + "\"");
}

template struct LossResult<float>;
template struct LossResult<double>;

template LossResult<float> compute_losses<float>(
    Tape<float>*, const Tensor<float>&, const Tensor<float>&,
    std::span<const LatentTriplet<float>>, std::span<const LatentTriplet<float>>,
    const LossWeights&);
template LossResult<double> compute_losses<double>(
    Tape<double>*, const Tensor<double>&, const Tensor<double>&,
    std::span<const LatentTriplet<double>>,
    std::span<const LatentTriplet<double>>, const LossWeights&);

template class Adam<float>;
template class Adam<double>;

template EpochStats train_epoch<float>(ObserverModel<float>&, const Tensor<float>&,
                                       const Tensor<float>&, const LossWeights&,
                                       Adam<float>&, std::int64_t, Rng&);
template EpochStats train_epoch<double>(ObserverModel<double>&,
                                        const Tensor<double>&,
                                        const Tensor<double>&, const LossWeights&,
                                        Adam<double>&, std::int64_t, Rng&);

}  // namespace stob
