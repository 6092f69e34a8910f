#include "caai/backbone.hpp"

namespace caai {

void BackboneConfig::validate() const {
  CAAI_CHECK(channels.size() == 5, "backbone needs exactly 5 block channel counts");
  CAAI_CHECK(convs_per_block.size() == 5, "backbone needs exactly 5 conv counts");
  for (int c : channels) CAAI_CHECK(c >= 2 && c % 2 == 0, "block channels must be even and >= 2");
  for (int k : convs_per_block) CAAI_CHECK(k >= 1, "convs_per_block entries must be >= 1");
  CAAI_CHECK(input_size >= 16 && input_size % 16 == 0,
             "input_size must be a positive multiple of 16, got " + std::to_string(input_size));
}

template <typename T>
BackboneT<T>::BackboneT(ParamRegistryT<T>& reg, const std::string& prefix,
                        const BackboneConfig& cfg, int in_channels, Rng& rng)
    : cfg_(cfg), in_channels_(in_channels) {
  cfg_.validate();
  int cin = in_channels;
  for (int b = 0; b < 5; ++b) {
    std::vector<Conv2dT<T>> block;
    const int cout = cfg_.channels[b];
    for (int k = 0; k < cfg_.convs_per_block[b]; ++k) {
      const std::string name =
          prefix + ".block" + std::to_string(b + 1) + ".conv" + std::to_string(k);
      block.emplace_back(reg, name, cin, cout, 3, /*padding=*/1, rng);
      cin = cout;
    }
    blocks_.push_back(std::move(block));
  }
}

template <typename T>
FeaturePyramidT<T> BackboneT<T>::extract(const TensorT<T>& x) const {
  CAAI_CHECK(x.rank() == 4, "backbone input must be NCHW");
  if (x.dim(1) != in_channels_) {
    fail("backbone stream expects " + std::to_string(in_channels_) + " channels, got " +
         std::to_string(x.dim(1)));
  }
  if (x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size) {
    fail("backbone expects " + std::to_string(cfg_.input_size) + "x" +
         std::to_string(cfg_.input_size) + " input, got " + shape_str(x.shape()));
  }
  FeaturePyramidT<T> pyr;
  TensorT<T> cur = x;
  for (int b = 0; b < 5; ++b) {
    if (b > 0) cur = max_pool2x2(cur);
    for (const auto& conv : blocks_[b]) cur = relu(conv(cur));
    pyr.levels[b] = cur;
  }
  return pyr;
}

template class BackboneT<float>;
template class BackboneT<double>;

}  // namespace caai
