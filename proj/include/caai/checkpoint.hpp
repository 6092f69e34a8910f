#pragma once

#include <memory>
#include <string>

#include "caai/trainer.hpp"

namespace caai {

inline constexpr char kCheckpointMagic[] = "CAAI1";

/// Quick header probe without loading tensor data.
struct CheckpointInfo {
  int precision = 0;  // 32 or 64
  TrainConfig config;
  std::uint64_t seed = 0;
  int epochs_done = 0;
};

CheckpointInfo peek_checkpoint(const std::string& path);

/// Writes magic, a JSON header (config, seed, dtype, epoch, parameter table)
/// and the little-endian parameter + velocity blobs in registry order.
template <typename T>
void save_checkpoint(const std::string& path, const TrainerT<T>& trainer);

/// Rebuilds a trainer from the stored config, then overwrites parameters,
/// velocities and the epoch counter from the blobs. T must match the stored
/// precision (use peek_checkpoint to dispatch).
template <typename T>
std::unique_ptr<TrainerT<T>> load_checkpoint(const std::string& path);

}  // namespace caai
