#pragma once

#include <cstdint>
#include <string>

#include "stob/config.hpp"
#include "stob/learning.hpp"
#include "stob/observer.hpp"

namespace stob {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint metadata returned by load_checkpoint.
struct CheckpointInfo {
  ExperimentConfig config;
  std::int64_t epoch = 0;
  std::string rng_state;
};

/// Writes the full training state: magic "STOB", format version, canonical
/// config JSON, every named parameter (name, dtype, extents, little-endian
/// payload), the optimizer moments (when given), the epoch counter and the
/// RNG state. save -> load -> save is byte-identical.
template <typename T>
void save_checkpoint(const std::string& path, const ExperimentConfig& config,
                     const ObserverModel<T>& model, const Adam<T>* optimizer,
                     std::int64_t epoch, const std::string& rng_state);

/// Reads only the embedded config (to construct a matching model before
/// loading the parameters).
ExperimentConfig read_checkpoint_config(const std::string& path);

/// Restores parameters (and optimizer state when `optimizer` is non-null)
/// in place. The checkpoint's parameter inventory must match the model's
/// (names, dtypes, extents); mismatches raise ContractError with a summary
/// of the differences. Returns the embedded config, epoch and RNG state.
template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, ObserverModel<T>& model,
                               Adam<T>* optimizer);

extern template void save_checkpoint<float>(const std::string&,
                                            const ExperimentConfig&,
                                            const ObserverModel<float>&,
                                            const Adam<float>*, std::int64_t,
                                            const std::string&);
extern template void save_checkpoint<double>(const std::string&,
                                             const ExperimentConfig&,
                                             const ObserverModel<double>&,
                                             const Adam<double>*, std::int64_t,
                                             const std::string&);
extern template CheckpointInfo load_checkpoint<float>(const std::string&,
                                                      ObserverModel<float>&,
                                                      Adam<float>*);
extern template CheckpointInfo load_checkpoint<double>(const std::string&,
                                                       ObserverModel<double>&,
                                                       Adam<double>*);

}  // namespace stob
