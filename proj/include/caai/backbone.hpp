#pragma once

#include <array>
#include <string>
#include <vector>

#include "caai/nn_ops.hpp"

namespace caai {

/// VGG-style five-block topology. Defaults are the desk-scale setting; the
/// full-size setting ([64,128,256,512,512], [2,2,4,4,4], 256) is reachable
/// through configuration.
struct BackboneConfig {
  std::vector<int> channels{8, 16, 32, 64, 64};
  std::vector<int> convs_per_block{2, 2, 2, 2, 2};
  int input_size = 64;

  void validate() const;
};

/// Five per-level feature tensors for one stream. Level i (1-based) has
/// channels[i-1] channels at input_size / 2^(i-1) spatial size: block output
/// after its last activation, before the next block's pool.
template <typename T>
struct FeaturePyramidT {
  std::array<TensorT<T>, 5> levels;

  const TensorT<T>& level(int i) const { return levels[i - 1]; }
};

/// One stream of the two-stream extractor. RGB and depth streams are two
/// independent instances registered under different name prefixes, so they
/// share no parameters.
template <typename T>
class BackboneT {
 public:
  BackboneT() = default;
  BackboneT(ParamRegistryT<T>& reg, const std::string& prefix, const BackboneConfig& cfg,
            int in_channels, Rng& rng);

  FeaturePyramidT<T> extract(const TensorT<T>& x) const;

  int in_channels() const { return in_channels_; }
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  int in_channels_ = 0;
  std::vector<std::vector<Conv2dT<T>>> blocks_;
};

}  // namespace caai
