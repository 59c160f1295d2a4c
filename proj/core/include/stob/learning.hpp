#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "stob/observer.hpp"
#include "stob/random.hpp"
#include "stob/tape.hpp"
#include "stob/tensor.hpp"

namespace stob {

/// Weights of the composite training loss. lambda0 scales the entrywise L1
/// term inside the frame loss; lambda1..3 scale the three latent
/// regularizers.
struct LossWeights {
  double lambda0 = 1.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;

  void validate() const;  // all weights must be nonnegative
};

/// Numeric values of the loss terms for one batch (or an epoch mean).
struct LossBreakdown {
  double l_y = 0.0;
  double l_x = 0.0;
  double l_z = 0.0;
  double l_xi = 0.0;
  double total = 0.0;
};

/// compute_losses output: the differentiable scalar plus its numeric
/// snapshot.
template <typename T>
struct LossResult {
  Tensor<T> total;
  LossBreakdown values;
};

/// Builds the training loss.
///   L_y  = (sum e^2 + lambda0 * sum |e|) / (N * L), e = pred - truth
///   L_x  = sum_i ||x_hat_i - x_i||^2 / (N * q)   (likewise L_z, L_xi)
///   total = L_y + lambda1 L_x + lambda2 L_z + lambda3 L_xi
/// Latent terms whose weight is zero are neither computed nor recorded, so
/// zero weights reduce the total to the frame loss exactly; in that case the
/// latent spans may be empty. Target latents must be detached constants.
template <typename T>
LossResult<T> compute_losses(Tape<T>* tape, const Tensor<T>& pred_frames,
                             const Tensor<T>& true_frames,
                             std::span<const LatentTriplet<T>> pred_latents,
                             std::span<const LatentTriplet<T>> target_latents,
                             const LossWeights& weights);

/// Adaptive-moment optimizer hyperparameters (published defaults).
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Bias-corrected adaptive-moment descent over a fixed parameter list.
/// Steps with any non-finite gradient are skipped without touching moments
/// or the step count; ten consecutive skips abort with NumericError.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig config);

  /// Applies one update from the parameters' accumulated gradients
  /// (missing gradients count as zero). Returns false when the step was
  /// skipped because a gradient was non-finite.
  bool step();

  /// Counts an externally detected bad batch (for example a non-finite
  /// loss) against the same consecutive-skip budget as step().
  void register_skip();

  void zero_grad();

  const AdamConfig& config() const { return config_; }
  std::span<Parameter<T>* const> params() const { return params_; }
  std::int64_t step_count() const { return step_count_; }
  std::int64_t consecutive_skips() const { return consecutive_skips_; }

  /// Moment accumulators in parameter order, exposed for checkpointing.
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

  /// Restores optimizer progress from a checkpoint; moment vectors must
  /// match the current parameter shapes.
  void restore(std::int64_t step_count, std::vector<std::vector<T>> m,
               std::vector<std::vector<T>> v);

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_count_ = 0;
  std::int64_t consecutive_skips_ = 0;
};

/// One epoch's aggregate statistics.
struct EpochStats {
  LossBreakdown mean;              // mean over batches with finite loss
  std::int64_t batches = 0;        // batches processed
  std::int64_t skipped_steps = 0;  // batches whose update was skipped
  double seconds = 0.0;
};

/// Runs one shuffled pass over (inputs, targets): forward rollout, loss,
/// backprop, optimizer step per batch. inputs is (N, T_in, C, H, W),
/// targets (N, T_out, C, H, W); the final batch may be smaller than
/// batch_size. Numerical failures are rethrown with the batch index.
/// Latent targets are only computed when a latent weight is positive.
template <typename T>
EpochStats train_epoch(ObserverModel<T>& model, const Tensor<T>& inputs,
                       const Tensor<T>& targets, const LossWeights& weights,
                       Adam<T>& optimizer, std::int64_t batch_size, Rng& rng);

/// Append-style CSV logger with the fixed header
/// `epoch,L_y,L_x,L_z,L_xi,total,seconds`.
class MetricsCsv {
 public:
  /// Creates (truncates) the file and writes the header.
  explicit MetricsCsv(const std::string& path);

  void append(std::int64_t epoch, const LossBreakdown& row, double seconds);

 private:
  std::ofstream out_;
  std::string path_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace stob
