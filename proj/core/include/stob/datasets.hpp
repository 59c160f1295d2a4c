#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stob/random.hpp"
#include "stob/tensor.hpp"

namespace stob {

inline constexpr std::uint32_t kDatasetVersion = 1;

/// In-memory sequence dataset: frames is (N, T, C, H, W). `normalized`
/// asserts values lie in [0, 1].
template <typename T>
struct SequenceData {
  Tensor<T> frames;
  bool normalized = false;

  std::int64_t samples() const { return frames.dim(0); }
  std::int64_t length() const { return frames.dim(1); }
};

/// Kinematics of the synthetic generators: `objects` sprites of edge length
/// `sprite`, speeds drawn uniformly from [min_speed, max_speed] with a
/// uniform heading, bouncing off the frame walls.
struct MotionSpec {
  std::int64_t objects = 2;
  std::int64_t sprite = 12;
  double min_speed = 0.5;
  double max_speed = 2.0;
  std::uint64_t seed = 0;

  void validate(std::int64_t height, std::int64_t width) const;
};

/// One moving object: (py, px) is the sprite's top-left corner in
/// [0, H-sprite] x [0, W-sprite]; glyph selects the digit bitmap (ignored by
/// the blob renderer, whose intensity peak sits at
/// (py, px) + (sprite-1)/2).
struct ObjectState {
  double py = 0.0;
  double px = 0.0;
  double vy = 0.0;
  double vx = 0.0;
  std::int64_t glyph = 0;
};

/// One reflective-wall step on the interval [0, limit]: advances p by v and
/// folds at the walls, flipping the velocity sign on each bounce.
std::pair<double, double> reflect_step(double p, double v, double limit);

/// The fixed 12x12 seven-segment digit bitmap (row-major, values 0 or 1).
const std::vector<double>& digit_glyph(std::int64_t digit);

/// Renders explicit object trajectories (digit sprites composited by
/// per-pixel max, positions rounded to the nearest pixel). states[i] holds
/// sample i's objects at frame 0; frames advance by reflect_step per axis.
template <typename T>
SequenceData<T> render_digit_sequences(
    const std::vector<std::vector<ObjectState>>& states, std::int64_t t,
    std::int64_t h, std::int64_t w, std::int64_t sprite);

/// As above with Gaussian blobs (sigma = sprite / 4) evaluated at the
/// continuous object position, composited by per-pixel max.
template <typename T>
SequenceData<T> render_blob_sequences(
    const std::vector<std::vector<ObjectState>>& states, std::int64_t t,
    std::int64_t h, std::int64_t w, std::int64_t sprite);

/// Two-digit (by default) bouncing-glyph sequences, (N, T, 1, H, W) in
/// [0, 1]. Deterministic in (spec, n, t, h, w).
template <typename T>
SequenceData<T> gen_moving_digits(const MotionSpec& spec, std::int64_t n,
                                  std::int64_t t, std::int64_t h = 64,
                                  std::int64_t w = 64);

/// Bouncing Gaussian blobs, (N, T, 1, H, W) in [0, 1]. The smooth intensity
/// profile makes this the desk-scale trainability workload.
template <typename T>
SequenceData<T> gen_bouncing_blobs(const MotionSpec& spec, std::int64_t n,
                                   std::int64_t t, std::int64_t h,
                                   std::int64_t w);

/// Affine map [lo, hi] -> [0, 1]. Requires hi > lo.
template <typename T>
Tensor<T> normalize(const Tensor<T>& raw, T lo, T hi);

/// Inverse of normalize (exact up to rounding).
template <typename T>
Tensor<T> denormalize(const Tensor<T>& normalized, T lo, T hi);

/// Split sizes: either fractions summing to 1, or absolute counts summing
/// to the sample count.
struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  bool absolute = false;
  std::int64_t train_n = 0;
  std::int64_t val_n = 0;
  std::int64_t test_n = 0;
};

template <typename T>
struct SplitData {
  SequenceData<T> train;
  SequenceData<T> val;
  SequenceData<T> test;
};

/// Seed-deterministic shuffled partition; the three parts are disjoint and
/// exhaustive.
template <typename T>
SplitData<T> split(const SequenceData<T>& data, const SplitSpec& spec,
                   std::uint64_t seed);

/// File header of the portable dataset format.
struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  std::int64_t n = 0, t = 0, c = 0, h = 0, w = 0;
  std::uint8_t dtype = 0;  // 0 = f32, 1 = f64
  bool normalized = false;
};

/// Binary dataset I/O: magic "STDS", version, extents, dtype tag,
/// normalization flag, then the sample-major little-endian payload.
/// Read errors report the byte offset.
template <typename T>
void write_dataset(const std::string& path, const SequenceData<T>& data);

DatasetHeader read_dataset_header(const std::string& path);

template <typename T>
SequenceData<T> read_dataset(const std::string& path);

/// Splits (N, T, C, H, W) along time into the first t_in frames and the
/// t_out frames that follow. Requires t_in + t_out <= T.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_time(const Tensor<T>& frames,
                                           std::int64_t t_in, std::int64_t t_out);

}  // namespace stob
