#include "stob/observer.hpp"

#include <algorithm>
#include <cmath>

namespace stob {

namespace {

using i64 = std::int64_t;

i64 inception_mid_channels(i64 c_out) { return std::max<i64>(1, c_out / 2); }

template <typename T>
Parameter<T> make_conv_param(const std::string& name, i64 c_out, i64 c_in, i64 kh,
                             i64 kw, Rng& rng, double slope) {
  Parameter<T> p;
  p.name = name;
  p.value = Tensor<T>::zeros({c_out, c_in, kh, kw}, /*requires_grad=*/true);
  fill_kaiming_uniform(p.value, rng, c_in * kh * kw, slope);
  return p;
}

template <typename T>
Parameter<T> make_filled_param(const std::string& name, Shape shape, T fill) {
  Parameter<T> p;
  p.name = name;
  p.value = Tensor<T>::full(std::move(shape), fill, /*requires_grad=*/true);
  return p;
}

template <typename T>
InceptionBlock<T> make_inception_block(const std::string& prefix, i64 c_in,
                                       i64 c_out, Rng& rng, double slope,
                                       bool linear) {
  InceptionBlock<T> block;
  block.slope = static_cast<T>(slope);
  block.linear = linear;
  const i64 c_mid = inception_mid_channels(c_out);
  block.entry_weight =
      make_conv_param<T>(prefix + ".entry.weight", c_mid, c_in, 1, 1, rng, slope);
  if (!linear) {
    block.entry_bias = make_filled_param<T>(prefix + ".entry.bias", {c_mid}, T(0));
  }
  for (std::size_t k = 0; k < kInceptionKernels.size(); ++k) {
    const i64 ks = kInceptionKernels[k];
    const std::string branch = prefix + ".branch" + std::to_string(ks);
    block.branch_weight[k] =
        make_conv_param<T>(branch + ".weight", c_out, c_mid, ks, ks, rng, slope);
    if (!linear) {
      block.branch_bias[k] = make_filled_param<T>(branch + ".bias", {c_out}, T(0));
    }
  }
  return block;
}

template <typename T>
std::vector<InceptionBlock<T>> make_inception_stack(const std::string& prefix,
                                                    i64 blocks, i64 c_in, i64 c_out,
                                                    Rng& rng, double slope) {
  std::vector<InceptionBlock<T>> stack;
  stack.reserve(static_cast<std::size_t>(blocks));
  for (i64 i = 0; i < blocks; ++i) {
    const i64 in_ch = (i == 0) ? c_in : c_out;
    stack.push_back(make_inception_block<T>(prefix + ".block" + std::to_string(i),
                                            in_ch, c_out, rng, slope,
                                            /*linear=*/false));
  }
  return stack;
}

template <typename T>
void collect_inception(std::vector<Parameter<T>*>& out, InceptionBlock<T>& b) {
  out.push_back(&b.entry_weight);
  if (b.entry_bias.value.defined()) out.push_back(&b.entry_bias);
  for (std::size_t k = 0; k < b.branch_weight.size(); ++k) {
    out.push_back(&b.branch_weight[k]);
    if (b.branch_bias[k].value.defined()) out.push_back(&b.branch_bias[k]);
  }
}

}  // namespace

const char* to_string(BVariant v) {
  switch (v) {
    case BVariant::kNone: return "none";
    case BVariant::kConv1x1: return "conv1x1";
    case BVariant::kConv3x3: return "conv3x3";
    case BVariant::kInception: return "inception";
  }
  throw ConfigError("invalid BVariant");
}

const char* to_string(AConstraint c) {
  switch (c) {
    case AConstraint::kSigmoid: return "sigmoid";
    case AConstraint::kClamp: return "clamp";
    case AConstraint::kNone: return "none";
  }
  throw ConfigError("invalid AConstraint");
}

const char* to_string(XiHandoff h) {
  switch (h) {
    case XiHandoff::kCarry: return "carry";
    case XiHandoff::kRecompute: return "recompute";
  }
  throw ConfigError("invalid XiHandoff");
}

BVariant b_variant_from_string(const std::string& s) {
  if (s == "none") return BVariant::kNone;
  if (s == "conv1x1") return BVariant::kConv1x1;
  if (s == "conv3x3") return BVariant::kConv3x3;
  if (s == "inception") return BVariant::kInception;
  throw ConfigError("unknown B variant \"" + s + "\"");
}

AConstraint a_constraint_from_string(const std::string& s) {
  if (s == "sigmoid") return AConstraint::kSigmoid;
  if (s == "clamp") return AConstraint::kClamp;
  if (s == "none") return AConstraint::kNone;
  throw ConfigError("unknown A constraint \"" + s + "\"");
}

XiHandoff xi_handoff_from_string(const std::string& s) {
  if (s == "carry") return XiHandoff::kCarry;
  if (s == "recompute") return XiHandoff::kRecompute;
  throw ConfigError("unknown xi hand-off mode \"" + s + "\"");
}

std::int64_t group_norm_groups(std::int64_t channels) {
  const std::int64_t preferred = std::min<std::int64_t>(8, channels);
  return (preferred > 0 && channels % preferred == 0) ? preferred : 1;
}

void ObserverConfig::validate() const {
  auto positive = [](i64 v, const char* name) {
    if (v < 1) {
      throw ConfigError(std::string("ObserverConfig: ") + name + " must be positive, got " +
                        std::to_string(v));
    }
  };
  positive(channels, "channels");
  positive(height, "height");
  positive(width, "width");
  positive(t_in, "t_in");
  positive(t_out, "t_out");
  positive(delta, "delta");
  positive(n_s, "n_s");
  positive(c_s, "c_s");
  positive(n_h, "n_h");
  positive(c_h, "c_h");
  positive(n_t, "n_t");
  positive(c_t, "c_t");
  if (t_in % delta != 0) {
    throw ConfigError("ObserverConfig: t_in " + std::to_string(t_in) +
                      " not divisible by delta " + std::to_string(delta));
  }
  if (t_out % delta != 0) {
    throw ConfigError("ObserverConfig: t_out " + std::to_string(t_out) +
                      " not divisible by delta " + std::to_string(delta));
  }
  if (!(activation_slope >= 0.0 && activation_slope < 1.0)) {
    throw ConfigError("ObserverConfig: activation_slope must be in [0, 1)");
  }
  if (!(group_norm_eps > 0.0)) {
    throw ConfigError("ObserverConfig: group_norm_eps must be positive");
  }
  // The stride plan must not shrink any extent below 1.
  latent_extent();
}

std::vector<std::int64_t> ObserverConfig::encoder_strides() const {
  std::vector<i64> strides(static_cast<std::size_t>(n_s));
  for (i64 i = 0; i < n_s; ++i) strides[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 2 : 1;
  return strides;
}

std::pair<std::int64_t, std::int64_t> ObserverConfig::latent_extent() const {
  i64 h = height, w = width;
  for (i64 s : encoder_strides()) {
    h = conv_out_extent(h, 3, s, 1);
    w = conv_out_extent(w, 3, s, 1);
  }
  return {h, w};
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(Tape<T>* tape, const Tensor<T>& x) const {
  Tensor<T> y = conv2d(tape, x, weight.value, &bias.value, stride, padding);
  y = group_norm(tape, y, gamma.value, beta.value, norm_groups, eps);
  return leaky_relu(tape, y, slope);
}

template <typename T>
Tensor<T> DeconvBlock<T>::forward(Tape<T>* tape, const Tensor<T>& x) const {
  Tensor<T> y = conv_transpose2d(tape, x, weight.value, &bias.value, stride,
                                 padding, out_pad_h, out_pad_w);
  y = group_norm(tape, y, gamma.value, beta.value, norm_groups, eps);
  return leaky_relu(tape, y, slope);
}

template <typename T>
Tensor<T> InceptionBlock<T>::forward(Tape<T>* tape, const Tensor<T>& x) const {
  const Tensor<T>* entry_b = linear ? nullptr : &entry_bias.value;
  Tensor<T> mid = conv2d(tape, x, entry_weight.value, entry_b, 1, 0);
  Tensor<T> acc;
  for (std::size_t k = 0; k < kInceptionKernels.size(); ++k) {
    const i64 pad = (kInceptionKernels[k] - 1) / 2;
    const Tensor<T>* branch_b = linear ? nullptr : &branch_bias[k].value;
    Tensor<T> branch = conv2d(tape, mid, branch_weight[k].value, branch_b, 1, pad);
    acc = (k == 0) ? branch : add(tape, acc, branch);
  }
  return linear ? acc : leaky_relu(tape, acc, slope);
}

template <typename T>
ObserverModel<T>::ObserverModel(const ObserverConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x6f6273657276ULL));
  const double slope = config_.activation_slope;
  const T eps = static_cast<T>(config_.group_norm_eps);
  const auto strides = config_.encoder_strides();

  // Per-block spatial extents along the encoder: extents_h[i] is the input
  // height of encoder block i; extents_h[n_s] the latent height.
  std::vector<i64> extents_h{config_.height};
  std::vector<i64> extents_w{config_.width};
  for (i64 i = 0; i < config_.n_s; ++i) {
    extents_h.push_back(conv_out_extent(extents_h.back(), 3, strides[static_cast<std::size_t>(i)], 1));
    extents_w.push_back(conv_out_extent(extents_w.back(), 3, strides[static_cast<std::size_t>(i)], 1));
  }

  encoder.reserve(static_cast<std::size_t>(config_.n_s));
  for (i64 i = 0; i < config_.n_s; ++i) {
    const i64 c_in = (i == 0) ? config_.grouped_channels() : config_.c_s;
    const std::string prefix = "encoder.block" + std::to_string(i);
    ConvBlock<T> block;
    block.weight = make_conv_param<T>(prefix + ".conv.weight", config_.c_s, c_in, 3,
                                      3, rng, slope);
    block.bias = make_filled_param<T>(prefix + ".conv.bias", {config_.c_s}, T(0));
    block.gamma = make_filled_param<T>(prefix + ".norm.gamma", {config_.c_s}, T(1));
    block.beta = make_filled_param<T>(prefix + ".norm.beta", {config_.c_s}, T(0));
    block.stride = strides[static_cast<std::size_t>(i)];
    block.norm_groups = group_norm_groups(config_.c_s);
    block.slope = static_cast<T>(slope);
    block.eps = eps;
    encoder.push_back(std::move(block));
  }

  h_inv = make_inception_stack<T>("h_inv", config_.n_h, config_.c_s, config_.c_h,
                                  rng, slope);
  t_fwd = make_inception_stack<T>("t_fwd", config_.n_t, config_.c_h, config_.c_t,
                                  rng, slope);

  const auto [lat_h, lat_w] = config_.latent_extent();
  a_raw.name = "a_raw";
  a_raw.value = Tensor<T>::zeros({config_.c_t, lat_h, lat_w}, /*requires_grad=*/true);
  fill_init(a_raw.value, rng, config_.a_init, lat_h * lat_w, slope);

  switch (config_.b_variant) {
    case BVariant::kNone:
      break;
    case BVariant::kConv1x1:
      b_conv_weight = make_conv_param<T>("b.conv.weight", config_.c_t, config_.c_s,
                                         1, 1, rng, slope);
      break;
    case BVariant::kConv3x3:
      b_conv_weight = make_conv_param<T>("b.conv.weight", config_.c_t, config_.c_s,
                                         3, 3, rng, slope);
      break;
    case BVariant::kInception:
      b_inception = make_inception_block<T>("b", config_.c_s, config_.c_t, rng,
                                            slope, /*linear=*/true);
      break;
  }

  t_inv = make_inception_stack<T>("t_inv", config_.n_t, config_.c_t, config_.c_h,
                                  rng, slope);
  h_fwd = make_inception_stack<T>("h_fwd", config_.n_h, config_.c_h, config_.c_s,
                                  rng, slope);

  decoder.reserve(static_cast<std::size_t>(config_.n_s));
  for (i64 j = 0; j < config_.n_s; ++j) {
    const i64 mirrored = config_.n_s - 1 - j;  // encoder block being undone
    const i64 c_out = (j == config_.n_s - 1) ? config_.grouped_channels() : config_.c_s;
    const std::string prefix = "decoder.block" + std::to_string(j);
    DeconvBlock<T> block;
    // conv_transpose2d weights are (C_in, C_out, kh, kw).
    block.weight.name = prefix + ".deconv.weight";
    block.weight.value = Tensor<T>::zeros({config_.c_s, c_out, 3, 3}, true);
    fill_kaiming_uniform(block.weight.value, rng, config_.c_s * 9, slope);
    block.bias = make_filled_param<T>(prefix + ".deconv.bias", {c_out}, T(0));
    block.gamma = make_filled_param<T>(prefix + ".norm.gamma", {c_out}, T(1));
    block.beta = make_filled_param<T>(prefix + ".norm.beta", {c_out}, T(0));
    block.stride = strides[static_cast<std::size_t>(mirrored)];
    const i64 in_h = extents_h[static_cast<std::size_t>(mirrored + 1)];
    const i64 in_w = extents_w[static_cast<std::size_t>(mirrored + 1)];
    const i64 target_h = extents_h[static_cast<std::size_t>(mirrored)];
    const i64 target_w = extents_w[static_cast<std::size_t>(mirrored)];
    block.out_pad_h = target_h - ((in_h - 1) * block.stride - 2 + 3);
    block.out_pad_w = target_w - ((in_w - 1) * block.stride - 2 + 3);
    if (block.out_pad_h < 0 || block.out_pad_h >= block.stride ||
        block.out_pad_w < 0 || block.out_pad_w >= block.stride) {
      throw ConfigError("decoder geometry cannot mirror encoder block " +
                        std::to_string(mirrored));
    }
    block.norm_groups = group_norm_groups(c_out);
    block.slope = static_cast<T>(slope);
    block.eps = eps;
    decoder.push_back(std::move(block));
  }
}

template <typename T>
std::vector<Parameter<T>*> ObserverModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (ConvBlock<T>& b : encoder) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
  }
  for (InceptionBlock<T>& b : h_inv) collect_inception(out, b);
  for (InceptionBlock<T>& b : t_fwd) collect_inception(out, b);
  out.push_back(&a_raw);
  switch (config_.b_variant) {
    case BVariant::kNone: break;
    case BVariant::kConv1x1:
    case BVariant::kConv3x3: out.push_back(&b_conv_weight); break;
    case BVariant::kInception: collect_inception(out, b_inception); break;
  }
  for (InceptionBlock<T>& b : t_inv) collect_inception(out, b);
  for (InceptionBlock<T>& b : h_fwd) collect_inception(out, b);
  for (DeconvBlock<T>& b : decoder) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> ObserverModel<T>::parameters() const {
  auto mutable_params = const_cast<ObserverModel<T>*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
Tensor<T> ObserverModel<T>::spatial_encode(Tape<T>* tape, const Tensor<T>& y_grouped,
                                           std::vector<Tensor<T>>* block_outputs) const {
  if (y_grouped.rank() != 4 || y_grouped.dim(1) != config_.grouped_channels() ||
      y_grouped.dim(2) != config_.height || y_grouped.dim(3) != config_.width) {
    throw ShapeError("spatial_encode: expected (N, " +
                     std::to_string(config_.grouped_channels()) + ", " +
                     std::to_string(config_.height) + ", " +
                     std::to_string(config_.width) + "), got " +
                     shape_str(y_grouped.shape()));
  }
  Tensor<T> x = y_grouped;
  if (block_outputs != nullptr) block_outputs->clear();
  for (const ConvBlock<T>& block : encoder) {
    x = block.forward(tape, x);
    if (block_outputs != nullptr) block_outputs->push_back(x);
  }
  return x;
}

template <typename T>
Tensor<T> ObserverModel<T>::run_inception_stack(
    Tape<T>* tape, const std::vector<InceptionBlock<T>>& stack,
    const Tensor<T>& input) const {
  Tensor<T> v = input;
  for (const InceptionBlock<T>& block : stack) v = block.forward(tape, v);
  return v;
}

template <typename T>
Tensor<T> ObserverModel<T>::state_estimate(Tape<T>* tape, const Tensor<T>& x) const {
  return run_inception_stack(tape, h_inv, x);
}

template <typename T>
Tensor<T> ObserverModel<T>::dynamic_transform(Tape<T>* tape, const Tensor<T>& z) const {
  return run_inception_stack(tape, t_fwd, z);
}

template <typename T>
Tensor<T> ObserverModel<T>::effective_a(Tape<T>* tape) const {
  switch (config_.a_constraint) {
    case AConstraint::kSigmoid: return sigmoid(tape, a_raw.value);
    case AConstraint::kClamp:
      return clamp(tape, a_raw.value, static_cast<T>(kAClampLo),
                   static_cast<T>(kAClampHi));
    case AConstraint::kNone: return a_raw.value;
  }
  throw ConfigError("invalid AConstraint");
}

template <typename T>
Tensor<T> ObserverModel<T>::apply_b(Tape<T>* tape, const Tensor<T>& x) const {
  switch (config_.b_variant) {
    case BVariant::kNone: return Tensor<T>();
    case BVariant::kConv1x1:
      return conv2d<T>(tape, x, b_conv_weight.value, nullptr, 1, 0);
    case BVariant::kConv3x3:
      return conv2d<T>(tape, x, b_conv_weight.value, nullptr, 1, 1);
    case BVariant::kInception: return b_inception.forward(tape, x);
  }
  throw ConfigError("invalid BVariant");
}

template <typename T>
Tensor<T> ObserverModel<T>::forecast_step(Tape<T>* tape, const Tensor<T>& xi_prev,
                                          const Tensor<T>& x_prev) const {
  Tensor<T> a_eff = effective_a(tape);
  Tensor<T> decay = hadamard(tape, xi_prev, a_eff);
  if (config_.b_variant == BVariant::kNone) return decay;
  Tensor<T> drive = apply_b(tape, x_prev);
  return add(tape, decay, drive);
}

template <typename T>
Tensor<T> ObserverModel<T>::dynamic_invert(Tape<T>* tape, const Tensor<T>& xi_hat,
                                           const Tensor<T>* skip_z) const {
  Tensor<T> z = run_inception_stack(tape, t_inv, xi_hat);
  if (config_.skip_connections && skip_z != nullptr && skip_z->defined()) {
    z = add(tape, z, *skip_z);
  }
  return z;
}

template <typename T>
Tensor<T> ObserverModel<T>::latent_output(Tape<T>* tape, const Tensor<T>& z_hat,
                                          const Tensor<T>* skip_x) const {
  Tensor<T> x = run_inception_stack(tape, h_fwd, z_hat);
  if (config_.skip_connections && skip_x != nullptr && skip_x->defined()) {
    x = add(tape, x, *skip_x);
  }
  return x;
}

template <typename T>
Tensor<T> ObserverModel<T>::spatial_decode(Tape<T>* tape, const Tensor<T>& x_hat,
                                           std::span<const Tensor<T>> encoder_outputs) const {
  const bool use_skips = config_.skip_connections && !encoder_outputs.empty();
  if (use_skips && static_cast<i64>(encoder_outputs.size()) != config_.n_s) {
    throw ShapeError("spatial_decode: expected " + std::to_string(config_.n_s) +
                     " encoder block outputs, got " +
                     std::to_string(encoder_outputs.size()));
  }
  Tensor<T> v = x_hat;
  for (i64 j = 0; j < config_.n_s; ++j) {
    v = decoder[static_cast<std::size_t>(j)].forward(tape, v);
    // Decoder block j (0-based) mirrors encoder block n_s-2-j's output.
    const i64 enc_idx = config_.n_s - 2 - j;
    if (use_skips && enc_idx >= 0) {
      v = add(tape, v, encoder_outputs[static_cast<std::size_t>(enc_idx)]);
    }
  }
  return v;
}

template <typename T>
Rollout<T> ObserverModel<T>::forecast_sequence(Tape<T>* tape, const Tensor<T>& y_in,
                                               std::int64_t horizon) const {
  if (y_in.rank() != 5) {
    throw ShapeError("forecast_sequence: expected (N, T, C, H, W), got " +
                     shape_str(y_in.shape()));
  }
  const i64 t = y_in.dim(1);
  if (t % config_.delta != 0) {
    throw ConfigError("forecast_sequence: input length " + std::to_string(t) +
                      " not divisible by delta " + std::to_string(config_.delta));
  }
  if (horizon < 1 || horizon % config_.delta != 0) {
    throw ConfigError("forecast_sequence: horizon " + std::to_string(horizon) +
                      " not divisible by delta " + std::to_string(config_.delta));
  }
  const i64 m = t / config_.delta;
  const i64 q = horizon / config_.delta;
  const i64 iterations = m + q - 1;

  Tensor<T> grouped = group(tape, y_in, config_.delta);  // (N, m, C*delta, H, W)

  Rollout<T> rollout;
  rollout.steps.reserve(static_cast<std::size_t>(iterations));
  Tensor<T> xi_prev;
  Tensor<T> prev_group;
  std::vector<Tensor<T>> enc_feats;
  std::vector<Tensor<T>> kept_groups;

  for (i64 it = 0; it < iterations; ++it) {
    const bool from_prediction = it >= m;
    Tensor<T> y_group =
        from_prediction ? prev_group : select_frame(tape, grouped, it);

    Tensor<T> x_cur = spatial_encode(tape, y_group, &enc_feats);
    Tensor<T> z_cur = state_estimate(tape, x_cur);
    Tensor<T> xi_cur;
    if (it == 0 || config_.xi_handoff == XiHandoff::kRecompute) {
      xi_cur = dynamic_transform(tape, z_cur);
    } else {
      xi_cur = xi_prev;
    }

    Tensor<T> xi_hat = forecast_step(tape, xi_cur, x_cur);
    Tensor<T> z_hat = dynamic_invert(tape, xi_hat, &z_cur);
    Tensor<T> x_hat = latent_output(tape, z_hat, &x_cur);
    Tensor<T> y_hat = spatial_decode(tape, x_hat, enc_feats);

    if (!y_hat.all_finite() || !xi_hat.all_finite()) {
      throw NumericError("forecast_sequence: non-finite values at group step " +
                         std::to_string(it + 1) + " of " + std::to_string(iterations));
    }

    RolloutStep<T> step;
    step.predicted = LatentTriplet<T>{x_hat, z_hat, xi_hat};
    step.frames_group = y_hat;
    step.input_was_prediction = from_prediction;
    step.kept = it >= m - 1;
    if (step.kept) kept_groups.push_back(y_hat);
    rollout.steps.push_back(std::move(step));

    xi_prev = xi_hat;
    prev_group = y_hat;
  }

  Tensor<T> stacked =
      stack_frames<T>(tape, {kept_groups.data(), kept_groups.size()});
  rollout.frames = degroup(tape, stacked, config_.delta);
  return rollout;
}

template <typename T>
std::vector<LatentTriplet<T>> ObserverModel<T>::latent_targets(
    const Tensor<T>& y_future) const {
  if (y_future.rank() != 5) {
    throw ShapeError("latent_targets: expected (N, T, C, H, W), got " +
                     shape_str(y_future.shape()));
  }
  if (y_future.dim(1) % config_.delta != 0) {
    throw ConfigError("latent_targets: frame count " + std::to_string(y_future.dim(1)) +
                      " not divisible by delta " + std::to_string(config_.delta));
  }
  Tensor<T> future = y_future.requires_grad() ? y_future.detach_copy() : y_future;
  Tensor<T> grouped = group<T>(nullptr, future, config_.delta);
  const i64 q = grouped.dim(1);
  std::vector<LatentTriplet<T>> targets;
  targets.reserve(static_cast<std::size_t>(q));
  for (i64 g = 0; g < q; ++g) {
    Tensor<T> y_group = select_frame<T>(nullptr, grouped, g);
    LatentTriplet<T> triple;
    triple.x = spatial_encode(nullptr, y_group);
    triple.z = state_estimate(nullptr, triple.x);
    triple.xi = dynamic_transform(nullptr, triple.z);
    targets.push_back(std::move(triple));
  }
  return targets;
}

template <typename T>
T ObserverModel<T>::max_effective_a() const {
  Tensor<T> a = effective_a(nullptr);
  T best = a.data()[0];
  for (T v : a.data()) best = std::max(best, v);
  return best;
}

template <typename T>
Tensor<T> group(Tape<T>* tape, const Tensor<T>& y, std::int64_t delta) {
  if (delta < 1) throw ConfigError("group: delta must be positive");
  if (y.rank() != 4 && y.rank() != 5) {
    throw ShapeError("group: expected (T, C, H, W) or (N, T, C, H, W), got " +
                     shape_str(y.shape()));
  }
  const bool batched = y.rank() == 5;
  const i64 t = batched ? y.dim(1) : y.dim(0);
  const i64 c = batched ? y.dim(2) : y.dim(1);
  if (t % delta != 0) {
    throw ConfigError("group: frame count " + std::to_string(t) +
                      " not divisible by delta " + std::to_string(delta));
  }
  Shape out_shape;
  if (batched) out_shape.push_back(y.dim(0));
  out_shape.push_back(t / delta);
  out_shape.push_back(c * delta);
  out_shape.push_back(y.dim(-2));
  out_shape.push_back(y.dim(-1));
  return reshape(tape, y, std::move(out_shape));
}

template <typename T>
Tensor<T> degroup(Tape<T>* tape, const Tensor<T>& y, std::int64_t delta) {
  if (delta < 1) throw ConfigError("degroup: delta must be positive");
  if (y.rank() != 4 && y.rank() != 5) {
    throw ShapeError("degroup: expected (G, C', H, W) or (N, G, C', H, W), got " +
                     shape_str(y.shape()));
  }
  const bool batched = y.rank() == 5;
  const i64 g = batched ? y.dim(1) : y.dim(0);
  const i64 c = batched ? y.dim(2) : y.dim(1);
  if (c % delta != 0) {
    throw ConfigError("degroup: channel count " + std::to_string(c) +
                      " not divisible by delta " + std::to_string(delta));
  }
  Shape out_shape;
  if (batched) out_shape.push_back(y.dim(0));
  out_shape.push_back(g * delta);
  out_shape.push_back(c / delta);
  out_shape.push_back(y.dim(-2));
  out_shape.push_back(y.dim(-1));
  return reshape(tape, y, std::move(out_shape));
}

template <typename T>
std::vector<double> latent_error_decay(const ObserverModel<T>& model,
                                       const Tensor<T>& xi_a0,
                                       const Tensor<T>& xi_b0,
                                       std::span<const Tensor<T>> xs,
                                       std::int64_t k_steps) {
  require_same_shape(xi_a0.shape(), xi_b0.shape(), "latent_error_decay");
  if (k_steps < 0) throw ContractError("latent_error_decay: negative step count");

  auto max_abs_diff = [](const Tensor<T>& a, const Tensor<T>& b) {
    auto av = a.data();
    auto bv = b.data();
    double best = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      best = std::max(best, std::abs(static_cast<double>(av[i]) -
                                     static_cast<double>(bv[i])));
    }
    return best;
  };

  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(k_steps) + 1);
  Tensor<T> a = xi_a0;
  Tensor<T> b = xi_b0;
  curve.push_back(max_abs_diff(a, b));
  for (i64 k = 1; k <= k_steps; ++k) {
    if (xs.empty()) {
      Tensor<T> a_eff = model.effective_a(nullptr);
      a = hadamard<T>(nullptr, a, a_eff);
      b = hadamard<T>(nullptr, b, a_eff);
    } else {
      const Tensor<T>& x = xs[static_cast<std::size_t>((k - 1) % static_cast<i64>(xs.size()))];
      a = model.forecast_step(nullptr, a, x);
      b = model.forecast_step(nullptr, b, x);
    }
    curve.push_back(max_abs_diff(a, b));
  }
  return curve;
}

template class ObserverModel<float>;
template class ObserverModel<double>;

template struct ConvBlock<float>;
template struct ConvBlock<double>;
template struct DeconvBlock<float>;
template struct DeconvBlock<double>;
template struct InceptionBlock<float>;
template struct InceptionBlock<double>;

template Tensor<float> group<float>(Tape<float>*, const Tensor<float>&, std::int64_t);
template Tensor<double> group<double>(Tape<double>*, const Tensor<double>&, std::int64_t);
template Tensor<float> degroup<float>(Tape<float>*, const Tensor<float>&, std::int64_t);
template Tensor<double> degroup<double>(Tape<double>*, const Tensor<double>&, std::int64_t);

template std::vector<double> latent_error_decay<float>(const ObserverModel<float>&,
                                                       const Tensor<float>&,
                                                       const Tensor<float>&,
                                                       std::span<const Tensor<float>>,
                                                       std::int64_t);
template std::vector<double> latent_error_decay<double>(const ObserverModel<double>&,
                                                        const Tensor<double>&,
                                                        const Tensor<double>&,
                                                        std::span<const Tensor<double>>,
                                                        std::int64_t);

}  // namespace stob
