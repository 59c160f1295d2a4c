#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "stob/tensor.hpp"

namespace stob {

/// Deterministic random source.
///
/// The engine is std::mt19937_64, whose output sequence is pinned by the
/// standard. The uniform and normal transforms are implemented here rather
/// than with std::*_distribution, because those are allowed to differ
/// between standard library implementations; with the hand-rolled
/// transforms the same seed yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via the Box-Muller transform (no cached spare, so the
  /// serialized engine state fully determines future output).
  double normal();
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n); n must be positive. Uses rejection-free
  /// scaling from the 53-bit uniform, which is unbiased enough for shuffles
  /// and index sampling at the sizes used here.
  std::int64_t index(std::int64_t n);

  /// Derives an independent seed for a sub-stream. Mixing is SplitMix64 so
  /// that nearby stream ids do not produce correlated seeds.
  std::uint64_t fork(std::uint64_t stream);

  /// Serialized engine state (text, as defined by the standard for
  /// mt19937_64 stream insertion).
  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 gen_;
};

/// SplitMix64 mix function: maps a seed and stream id to a well-spread seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Weight initialization schemes.
enum class InitKind {
  kNormal,          // N(0, 1)
  kUniform,         // U(-1, 1)
  kKaimingUniform,  // U(-b, b), b = sqrt(6 / ((1 + slope^2) * fan_in))
};

const char* to_string(InitKind kind);
InitKind init_kind_from_string(const std::string& s);

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double mean, double stddev);
template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi);
/// Kaiming / He uniform initialization for layers followed by a leaky
/// rectifier with the given negative slope.
template <typename T>
void fill_kaiming_uniform(Tensor<T>& t, Rng& rng, std::int64_t fan_in,
                          double slope);
template <typename T>
void fill_init(Tensor<T>& t, Rng& rng, InitKind kind, std::int64_t fan_in,
               double slope);

}  // namespace stob
