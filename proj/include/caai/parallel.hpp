#pragma once

#include <cstdint>
#include <functional>

namespace caai {

/// Number of worker threads used by parallel_for. Initialized from the
/// CAAI_THREADS environment variable (default: all hardware cores).
int thread_count();

/// Override the thread count at runtime (0 restores the startup default).
void set_threads(int n);

/// Runs fn(i) for i in [begin, end). Work is split into contiguous chunks,
/// one per worker, so writes to disjoint slices stay race-free and every
/// element is produced by a fixed sequential inner order regardless of the
/// thread count (determinism contract).
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace caai
