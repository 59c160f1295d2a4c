#pragma once

#include <cstdint>
#include <string>

#include "stob/learning.hpp"
#include "stob/observer.hpp"

namespace stob {

/// Dataset geometry and location.
struct DataConfig {
  std::int64_t channels = 1;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t t_in = 10;
  std::int64_t t_out = 10;
  std::string path;  // dataset file; may instead come from the command line
};

/// Architecture knobs (the data geometry lives in DataConfig).
struct ModelConfig {
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
};

struct TrainingConfig {
  std::int64_t batch_size = 16;
  std::int64_t epochs = 10;
};

/// Complete experiment description, serialized as strict JSON: unknown keys
/// are rejected, missing keys take the defaults above, and
/// parse -> serialize -> parse is stable (canonical form sorts keys).
struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  LossWeights loss;
  AdamConfig optimizer;
  TrainingConfig training;

  /// Merges data geometry and model knobs into the architecture config.
  ObserverConfig observer_config() const;

  /// Validates every section (geometry, weights, optimizer, training).
  void validate() const;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  /// Canonical serialization: sorted keys, round-trip-exact numbers.
  std::string to_canonical_json() const;

  /// FNV-1a 64-bit hash of the canonical JSON text.
  std::uint64_t config_hash() const;
  std::string config_hash_hex() const;  // 16 lowercase hex digits
};

/// FNV-1a 64-bit over arbitrary bytes (exposed for report stamping).
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace stob
