#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stob/ops.hpp"
#include "stob/random.hpp"
#include "stob/tape.hpp"
#include "stob/tensor.hpp"

namespace stob {

/// Driving-projection variants (the B map of the latent update).
enum class BVariant { kNone, kConv1x1, kConv3x3, kInception };
/// Constraint applied to the raw coefficient tensor before use.
enum class AConstraint { kSigmoid, kClamp, kNone };
/// How the latent state crosses group steps in a rollout: carry the
/// previous prediction forward, or recompute it from the current input.
enum class XiHandoff { kCarry, kRecompute };

const char* to_string(BVariant v);
const char* to_string(AConstraint c);
const char* to_string(XiHandoff h);
BVariant b_variant_from_string(const std::string& s);
AConstraint a_constraint_from_string(const std::string& s);
XiHandoff xi_handoff_from_string(const std::string& s);

/// Clamp interval used by the kClamp constraint; strictly inside (0, 1) so
/// the clamped coefficients keep the contraction property.
inline constexpr double kAClampLo = 0.05;
inline constexpr double kAClampHi = 0.95;

/// Branch kernel sizes of every inception block.
inline constexpr std::array<std::int64_t, 4> kInceptionKernels{3, 5, 7, 11};

/// Full architecture description. Channel/kernel symbols follow the usual
/// encoder (N_S blocks, C_S channels), state stacks (N_h blocks, C_h
/// channels), dynamics stacks (N_T blocks, C_T channels) naming.
struct ObserverConfig {
  std::int64_t channels = 1;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t t_in = 10;
  std::int64_t t_out = 10;
  std::int64_t delta = 10;

  std::int64_t n_s = 4;
  std::int64_t c_s = 64;
  std::int64_t n_h = 2;
  std::int64_t c_h = 512;
  std::int64_t n_t = 2;
  std::int64_t c_t = 512;

  BVariant b_variant = BVariant::kInception;
  AConstraint a_constraint = AConstraint::kSigmoid;
  InitKind a_init = InitKind::kKaimingUniform;
  XiHandoff xi_handoff = XiHandoff::kCarry;
  bool skip_connections = true;
  double activation_slope = 0.2;
  double group_norm_eps = 1e-5;

  /// Throws ConfigError on invalid combinations (non-positive extents,
  /// horizons not divisible by delta, ...).
  void validate() const;

  /// Encoder strides alternate 2, 1, 2, 1, ... starting with 2; the decoder
  /// uses them reversed.
  std::vector<std::int64_t> encoder_strides() const;
  /// Spatial extent (h*, w*) of all latent tensors after the encoder.
  std::pair<std::int64_t, std::int64_t> latent_extent() const;
  std::int64_t grouped_channels() const { return channels * delta; }
  std::int64_t input_groups() const { return t_in / delta; }
  std::int64_t output_groups() const { return t_out / delta; }
};

/// Group-norm group count rule: min(8, C), falling back to 1 whenever that
/// does not divide C.
std::int64_t group_norm_groups(std::int64_t channels);

/// Encoder block: strided conv + group norm + leaky rectifier.
template <typename T>
struct ConvBlock {
  Parameter<T> weight, bias, gamma, beta;
  std::int64_t stride = 1;
  std::int64_t padding = 1;
  std::int64_t norm_groups = 1;
  T slope = T(0.2);
  T eps = T(1e-5);

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const;
};

/// Decoder block: transposed conv + group norm + leaky rectifier. Output
/// padding is fixed at construction from the mirrored encoder geometry.
template <typename T>
struct DeconvBlock {
  Parameter<T> weight, bias, gamma, beta;
  std::int64_t stride = 1;
  std::int64_t padding = 1;
  std::int64_t out_pad_h = 0;
  std::int64_t out_pad_w = 0;
  std::int64_t norm_groups = 1;
  T slope = T(0.2);
  T eps = T(1e-5);

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const;
};

/// Inception block: 1x1 entry conv, four parallel same-padding branch convs
/// (kernels 3/5/7/11) whose outputs are summed, then a leaky rectifier.
/// `linear` variants (used for the B projection) drop biases and the
/// activation so the block is a purely linear map.
template <typename T>
struct InceptionBlock {
  Parameter<T> entry_weight, entry_bias;
  std::array<Parameter<T>, 4> branch_weight;
  std::array<Parameter<T>, 4> branch_bias;
  T slope = T(0.2);
  bool linear = false;

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const;
};

/// Latent snapshot of one predicted (or target) group step.
template <typename T>
struct LatentTriplet {
  Tensor<T> x;   // encoder-space latent
  Tensor<T> z;   // nonlinear state
  Tensor<T> xi;  // linear state
};

/// One iteration of a rollout. Iterations covering the known input window
/// are warm-up (kept = false); the q kept steps are the actual forecast.
template <typename T>
struct RolloutStep {
  LatentTriplet<T> predicted;   // x_hat, z_hat, xi_hat produced by the step
  Tensor<T> frames_group;       // decoded group (N, C*delta, H, W)
  bool input_was_prediction = false;
  bool kept = false;
};

/// Result of forecast_sequence.
template <typename T>
struct Rollout {
  Tensor<T> frames;  // (N, tau, C, H, W)
  std::vector<RolloutStep<T>> steps;
};

/// Folds delta consecutive frames into the channel axis:
/// (T, C, H, W) -> (T/delta, C*delta, H, W), or with a leading batch axis,
/// (N, T, C, H, W) -> (N, T/delta, C*delta, H, W). Pure row-major reshape,
/// so degroup(group(y)) is bit-exact.
template <typename T>
Tensor<T> group(Tape<T>* tape, const Tensor<T>& y, std::int64_t delta);

/// Exact inverse of group: splits the channel axis back into delta frames.
template <typename T>
Tensor<T> degroup(Tape<T>* tape, const Tensor<T>& y, std::int64_t delta);

/// The full model: spatial encoder phi, state stacks h^-1/h, dynamics
/// stacks T/T^-1, coefficient tensor A, driving projection B, and the
/// spatial decoder. Construction seeds every parameter deterministically.
template <typename T>
class ObserverModel {
 public:
  ObserverModel(const ObserverConfig& config, std::uint64_t seed);

  const ObserverConfig& config() const { return config_; }

  /// All trainable parameters in a fixed construction order; names are
  /// unique dotted paths.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  /// phi: grouped frames (N, C*delta, H, W) -> x (N, C_S, h*, w*). When
  /// `block_outputs` is given it receives every encoder block's output
  /// (the last entry is x itself) for the decoder skip connections.
  Tensor<T> spatial_encode(Tape<T>* tape, const Tensor<T>& y_grouped,
                           std::vector<Tensor<T>>* block_outputs = nullptr) const;
  /// h^-1: x -> z (N, C_h, h*, w*).
  Tensor<T> state_estimate(Tape<T>* tape, const Tensor<T>& x) const;
  /// T: z -> xi (N, C_T, h*, w*).
  Tensor<T> dynamic_transform(Tape<T>* tape, const Tensor<T>& z) const;
  /// The constrained coefficient tensor (C_T, h*, w*).
  Tensor<T> effective_a(Tape<T>* tape) const;
  /// B(x) (N, C_T, h*, w*); undefined tensor for the kNone variant.
  Tensor<T> apply_b(Tape<T>* tape, const Tensor<T>& x) const;
  /// xi_hat = A o xi_prev + B(x_prev); A broadcasts over the batch axis.
  Tensor<T> forecast_step(Tape<T>* tape, const Tensor<T>& xi_prev,
                          const Tensor<T>& x_prev) const;
  /// T^-1: xi_hat -> z_hat; adds the skip from T's input when enabled and
  /// provided.
  Tensor<T> dynamic_invert(Tape<T>* tape, const Tensor<T>& xi_hat,
                           const Tensor<T>* skip_z = nullptr) const;
  /// h: z_hat -> x_hat; adds the skip from h^-1's input when enabled.
  Tensor<T> latent_output(Tape<T>* tape, const Tensor<T>& z_hat,
                          const Tensor<T>* skip_x = nullptr) const;
  /// phi^-: x_hat -> grouped frames (N, C*delta, H, W); consumes encoder
  /// block outputs for the additive skips when enabled.
  Tensor<T> spatial_decode(Tape<T>* tape, const Tensor<T>& x_hat,
                           std::span<const Tensor<T>> encoder_outputs = {}) const;

  /// Full multi-step forecast: consumes T_in frames (N, T_in, C, H, W),
  /// returns `horizon` frames. Groups the input, iterates the observer over
  /// input groups (warm-up) and then over its own predictions (hybrid
  /// recursive-direct strategy). Requires T_in and horizon divisible by
  /// delta. Throws NumericError naming the step when activations go
  /// non-finite.
  Rollout<T> forecast_sequence(Tape<T>* tape, const Tensor<T>& y_in,
                               std::int64_t horizon) const;

  /// Targets for the dynamic regularization: encodes true future frames
  /// (N, tau, C, H, W) through phi, h^-1, T per group. Always detached
  /// (no tape), so the targets act as constants in the loss.
  std::vector<LatentTriplet<T>> latent_targets(const Tensor<T>& y_future) const;

  /// Largest element of the effective coefficient tensor.
  T max_effective_a() const;

  // Sub-structures are public for checkpointing, diagnostics and tests.
  std::vector<ConvBlock<T>> encoder;
  std::vector<InceptionBlock<T>> h_inv;
  std::vector<InceptionBlock<T>> t_fwd;
  Parameter<T> a_raw;
  InceptionBlock<T> b_inception;  // used when variant == kInception
  Parameter<T> b_conv_weight;     // used for kConv1x1 / kConv3x3
  std::vector<InceptionBlock<T>> t_inv;
  std::vector<InceptionBlock<T>> h_fwd;
  std::vector<DeconvBlock<T>> decoder;

 private:
  Tensor<T> run_inception_stack(Tape<T>* tape,
                                const std::vector<InceptionBlock<T>>& stack,
                                const Tensor<T>& input) const;

  ObserverConfig config_;
};

extern template class ObserverModel<float>;
extern template class ObserverModel<double>;

/// Runs two latent trajectories from xi_a0 / xi_b0 under the identical
/// driving sequence xs (each entry the x fed to B at that step; may be
/// empty for pure-decay runs) and returns the max-norm error curve
/// e_0..e_K. Contract under a constrained A: e_k <= (max A)^k * e_0.
template <typename T>
std::vector<double> latent_error_decay(const ObserverModel<T>& model,
                                       const Tensor<T>& xi_a0,
                                       const Tensor<T>& xi_b0,
                                       std::span<const Tensor<T>> xs,
                                       std::int64_t k_steps);

}  // namespace stob
