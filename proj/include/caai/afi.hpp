#pragma once

#include <array>
#include <string>

#include "caai/cca.hpp"

namespace caai {

/// Convex blend of the original RGB feature and the averaged enhanced/depth
/// features: (1 - k) * fh + k * (h + d) / 2 with per-channel k in [0,1].
/// Exposed so the k=0 / k=1 forced behaviors are testable on the production
/// path.
template <typename T>
TensorT<T> adaptive_mix(const TensorT<T>& fh, const TensorT<T>& h, const TensorT<T>& d,
                        const TensorT<T>& k);

/// Cross-modal fusion for one level: gates n, m from the lower-level RGB
/// guidance, two half-width conv branches on the RGB feature, a two-conv
/// PReLU depth path, and the per-channel blend coefficient k from pooled RGB.
template <typename T>
struct AfiLevelT {
  int channels = 0;  // C at this level; branches emit C/2 each

  Conv2dT<T> gate_n;              // 1x1, guidance -> C/2
  Conv2dT<T> gate_m;              // 3x3, guidance -> C/2
  Conv2dT<T> branch_a, branch_b;  // 3x3, fh -> C/2 each
  Conv2dT<T> depth1, depth2;      // 3x3, fd -> C -> C
  PReluT<T> depth_act1, depth_act2;
  Conv2dT<T> coeff_k;             // 1x1 on pooled fh -> C

  AfiLevelT() = default;
  AfiLevelT(ParamRegistryT<T>& reg, const std::string& name, int channels,
            int guide_channels, Rng& rng);

  struct Parts {
    TensorT<T> n, m, h, d, k;
    TensorT<T> fused;  // f_i'' = Cat(f_i', fd), 2C channels
  };

  /// guide is the refined RGB feature one level up the resolution ladder
  /// (the level's own RGB feature at level 1).
  Parts fuse(const TensorT<T>& fh, const TensorT<T>& fd, const TensorT<T>& guide) const;
};

/// Residual unit mapping a 2C-channel fused feature to c_fuse channels, then
/// resampling to the common fusion resolution.
template <typename T>
struct ResidualUnitT {
  Conv2dT<T> proj;      // 1x1, 2C -> c_fuse
  Conv2dT<T> b1, b2;    // 3x3, 2C -> c_fuse -> c_fuse

  ResidualUnitT() = default;
  ResidualUnitT(ParamRegistryT<T>& reg, const std::string& name, int in_channels,
                int c_fuse, Rng& rng);

  TensorT<T> operator()(const TensorT<T>& x, int out_h, int out_w) const;
};

/// Adaptive feature integration across all five levels: spatial-attention
/// refinement of low-level features, per-level cross-modal fusion, residual
/// units, and the cross-level sum at the common (level-2) resolution.
template <typename T>
class AfiT {
 public:
  AfiT() = default;
  AfiT(ParamRegistryT<T>& reg, const std::string& prefix, const BackboneConfig& cfg,
       int c_common, int c_fuse, Rng& rng);

  /// Per-stream SA refinement of backbone levels 1-2. stream is 0 (RGB) or
  /// 1 (depth).
  TensorT<T> low_level_refine(const TensorT<T>& f, int stream, int level) const;

  const AfiLevelT<T>& level(int i) const { return levels_[i - 1]; }
  const ResidualUnitT<T>& residual(int i) const { return residuals_[i - 1]; }

  /// Fixed-order elementwise sum of five same-shape tensors.
  static TensorT<T> fuse_all(const std::array<TensorT<T>, 5>& parts);

  /// Whole module: refine low levels, fuse each level, apply residual units,
  /// sum at level-2 resolution. rgb/depth hold the refined features per level
  /// (SA outputs for 1-2, attention-module outputs for 3-5).
  TensorT<T> run(const std::array<TensorT<T>, 5>& rgb,
                 const std::array<TensorT<T>, 5>& depth) const;

  int c_fuse() const { return c_fuse_; }

 private:
  int c_fuse_ = 0;
  SpatialAttentionT<T> low_sa_[2][2];  // [stream][level-1]
  std::array<AfiLevelT<T>, 5> levels_;
  std::array<ResidualUnitT<T>, 5> residuals_;
};

}  // namespace caai
