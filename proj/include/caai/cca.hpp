#pragma once

#include <string>

#include "caai/backbone.hpp"
#include "caai/nn_ops.hpp"

namespace caai {

/// Channel attention: squeeze to NC11 with global average pooling, pass
/// through a bottleneck MLP (two 1x1 convs, reduction ratio 4), gate the
/// input with the sigmoid weights broadcast over space.
template <typename T>
struct ChannelAttentionT {
  Conv2dT<T> fc1, fc2;

  ChannelAttentionT() = default;
  ChannelAttentionT(ParamRegistryT<T>& reg, const std::string& name, int channels, Rng& rng);

  TensorT<T> operator()(const TensorT<T>& x) const;

  static constexpr int kBottleneckRatio = 4;
};

/// Spatial attention: squeeze channels to a mean map and a max map, run a
/// single k=5 conv over their concatenation, gate the input with the sigmoid
/// map broadcast over channels.
template <typename T>
struct SpatialAttentionT {
  Conv2dT<T> conv;

  SpatialAttentionT() = default;
  SpatialAttentionT(ParamRegistryT<T>& reg, const std::string& name, Rng& rng);

  TensorT<T> operator()(const TensorT<T>& x) const;

  /// The sigmoid weight map alone (one channel, input's spatial size).
  TensorT<T> weight_map(const TensorT<T>& x) const;
};

/// 3x3 size-preserving conv + ReLU, the node transform of the interaction
/// lattice.
template <typename T>
struct ConvUnitT {
  Conv2dT<T> conv;

  ConvUnitT() = default;
  ConvUnitT(ParamRegistryT<T>& reg, const std::string& name, int cin, int cout, Rng& rng)
      : conv(reg, name, cin, cout, 3, /*padding=*/1, rng) {}

  TensorT<T> operator()(const TensorT<T>& x) const { return relu(conv(x)); }
};

/// Eq.-7-style gate: (1 - sigmoid(s)) elementwise times `next` resampled to
/// s's resolution. Exposed so the forced-input behaviors are testable on the
/// exact production path.
template <typename T>
TensorT<T> complement_gate(const TensorT<T>& s, const TensorT<T>& next);

/// Context-aware complementary attention over backbone levels 3-5 of one
/// stream: common-width projection, six-node feature interaction lattice,
/// CA->SA attention with reversed-sigmoid cross-level guidance, and a
/// residual global-context branch on the deepest level.
template <typename T>
class CcaT {
 public:
  struct Output {
    TensorT<T> fhat3, fhat4, fhat5;    // gated features at level 3/4/5 resolution
    TensorT<T> s3, s4, s5;             // post-attention maps
    TensorT<T> w3, w4, w5;             // reversed sigmoid weights, in [0,1]
  };

  CcaT() = default;
  CcaT(ParamRegistryT<T>& reg, const std::string& prefix, const BackboneConfig& cfg,
       int c_common, Rng& rng);

  /// 1x1 conv + ReLU from backbone width to the common width; level is 3..5.
  TensorT<T> project_common(const TensorT<T>& f, int level) const;

  /// Six-node lattice in dependency order; returns (f3', f4', f5') at level
  /// 3/4/5 resolutions. With zero_cross_level set, every cross-resolution
  /// term is dropped and the lattice degenerates to chained per-level units
  /// (ablation hook).
  struct Interacted {
    TensorT<T> f3p, f4p, f5p;
  };
  Interacted feature_interaction(const TensorT<T>& f3, const TensorT<T>& f4,
                                 const TensorT<T>& f5, bool zero_cross_level = false) const;

  /// S_i = SA(CA(f_i')), w_i = 1 - sigmoid(S_i), fhat_i = w_i * US(S_{i+1})
  /// for i in {3,4}.
  Output complementary_attention(const TensorT<T>& f3p, const TensorT<T>& f4p,
                                 const TensorT<T>& f5p) const;

  /// fhat5 = w5 * (f5' + relu(conv(relu(conv(f5'))))).
  TensorT<T> global_context(const TensorT<T>& f5p, const TensorT<T>& w5) const;

  /// Full module: projection, interaction, attention, global context.
  Output run(const FeaturePyramidT<T>& pyramid) const;

  int c_common() const { return c_common_; }

 private:
  int c_common_ = 0;
  Conv2dT<T> proj_[3];                       // levels 3,4,5
  ConvUnitT<T> cu00_, cu10_, cu01_, cu20_, cu11_, cu02_;
  ChannelAttentionT<T> ca_[3];
  SpatialAttentionT<T> sa_[3];
  Conv2dT<T> gc1_, gc2_;
};

}  // namespace caai
