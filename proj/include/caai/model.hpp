#pragma once

#include <string>

#include "caai/afi.hpp"

namespace caai {

struct ModelConfig {
  BackboneConfig backbone;
  int c_common = 32;       // common width of the high-level attention path
  int c_fuse = 32;         // width of the fused cross-level features
  int depth_channels = 1;  // 1, or 3 to accept replicated depth

  void validate() const;
};

/// The full two-stream network: backbones, low-level spatial-attention
/// refinement, high-level complementary attention, adaptive cross-modal
/// fusion, and a small prediction head (conv-relu-conv-sigmoid, resampled to
/// the input size).
template <typename T>
class ModelT {
 public:
  ModelT() = default;
  ModelT(const ModelConfig& cfg, std::uint64_t seed);

  /// rgb: N x 3 x S x S, depth: N x depth_channels x S x S.
  /// Returns the saliency map N x 1 x S x S with values in (0,1).
  TensorT<T> forward(const TensorT<T>& rgb, const TensorT<T>& depth) const;

  const ModelConfig& config() const { return cfg_; }
  ParamRegistryT<T>& params() { return params_; }
  const ParamRegistryT<T>& params() const { return params_; }

  const BackboneT<T>& rgb_backbone() const { return rgb_backbone_; }
  const BackboneT<T>& depth_backbone() const { return depth_backbone_; }
  const CcaT<T>& rgb_cca() const { return rgb_cca_; }
  const CcaT<T>& depth_cca() const { return depth_cca_; }
  const AfiT<T>& afi() const { return afi_; }

 private:
  ModelConfig cfg_;
  ParamRegistryT<T> params_;
  BackboneT<T> rgb_backbone_, depth_backbone_;
  CcaT<T> rgb_cca_, depth_cca_;
  AfiT<T> afi_;
  Conv2dT<T> head1_, head2_;
};

/// Mean binary cross-entropy between a predicted map and a ground-truth map
/// of the same shape, with predictions clamped at 1e-7.
template <typename T>
TensorT<T> saliency_loss(const TensorT<T>& pred, const TensorT<T>& gt);

/// Analytic parameter count for a configuration; must equal
/// ParamRegistryT::total_params() of a constructed model.
std::int64_t analytic_param_count(const ModelConfig& cfg);

}  // namespace caai
