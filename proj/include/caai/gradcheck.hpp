#pragma once

#include <functional>
#include <string>
#include <vector>

#include "caai/rng.hpp"
#include "caai/tensor.hpp"

namespace caai::gradcheck {

inline constexpr double kStep = 1e-3;
inline constexpr double kTolerance = 1e-4;

struct CheckStats {
  double max_rel_err = 0.0;
  int checked = 0;
  int skipped_non_smooth = 0;  // coordinates where the FD oracle is invalid
};

/// Central-difference check of reverse-mode gradients. `forward` must be a
/// pure function of the leaves' current data and return a scalar. Gradients
/// are compared per coordinate with relative error
/// |analytic - numeric| / max(|analytic|, |numeric|, 1).
///
/// Central differences only estimate derivatives where they exist, so each
/// coordinate is probed at two step sizes; coordinates whose two estimates
/// disagree sit on a kink (relu boundary, pooling tie) and are skipped and
/// counted instead of checked.
CheckStats check_gradients(const std::function<Tensor64()>& forward,
                           const std::vector<Tensor64>& leaves, double step, Rng& rng,
                           int max_coords_per_leaf = -1);

struct ModuleResult {
  std::string module;
  CheckStats stats;
  bool passed() const { return stats.max_rel_err < kTolerance && stats.checked > 0; }
};

ModuleResult check_tensor_core(std::uint64_t seed);
ModuleResult check_nn_ops(std::uint64_t seed);
ModuleResult check_backbone(std::uint64_t seed);
ModuleResult check_cca(std::uint64_t seed);
ModuleResult check_afi(std::uint64_t seed);
ModuleResult check_model_trainer(std::uint64_t seed);

/// All module checks for one seed, in a fixed order.
std::vector<ModuleResult> run_all(std::uint64_t seed);

}  // namespace caai::gradcheck
