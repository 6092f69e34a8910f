#include "caai/cca.hpp"

namespace caai {

template <typename T>
ChannelAttentionT<T>::ChannelAttentionT(ParamRegistryT<T>& reg, const std::string& name,
                                        int channels, Rng& rng) {
  CAAI_CHECK(channels >= kBottleneckRatio,
             "channel attention needs at least " + std::to_string(kBottleneckRatio) +
                 " channels, got " + std::to_string(channels));
  const int mid = channels / kBottleneckRatio;
  fc1 = Conv2dT<T>(reg, name + ".fc1", channels, mid, 1, 0, rng);
  fc2 = Conv2dT<T>(reg, name + ".fc2", mid, channels, 1, 0, rng);
}

template <typename T>
TensorT<T> ChannelAttentionT<T>::operator()(const TensorT<T>& x) const {
  auto w = sigmoid(fc2(relu(fc1(global_avg_pool(x)))));  // N x C x 1 x 1
  return mul(x, w);
}

template <typename T>
SpatialAttentionT<T>::SpatialAttentionT(ParamRegistryT<T>& reg, const std::string& name,
                                        Rng& rng) {
  conv = Conv2dT<T>(reg, name + ".conv", 2, 1, 5, /*padding=*/2, rng);
}

template <typename T>
TensorT<T> SpatialAttentionT<T>::weight_map(const TensorT<T>& x) const {
  auto squeezed = concat<T>({channel_mean(x), channel_max(x)}, 1);  // N x 2 x H x W
  return sigmoid(conv(squeezed));                                   // N x 1 x H x W
}

template <typename T>
TensorT<T> SpatialAttentionT<T>::operator()(const TensorT<T>& x) const {
  CAAI_CHECK(x.dim(2) >= 1 && x.dim(3) >= 1, "spatial attention needs non-empty maps");
  return mul(x, weight_map(x));
}

template <typename T>
TensorT<T> complement_gate(const TensorT<T>& s, const TensorT<T>& next) {
  auto w = reverse(sigmoid(s));
  auto up = resample(next, s.dim(2), s.dim(3));
  return mul(w, up);
}

template <typename T>
CcaT<T>::CcaT(ParamRegistryT<T>& reg, const std::string& prefix, const BackboneConfig& cfg,
              int c_common, Rng& rng)
    : c_common_(c_common) {
  CAAI_CHECK(c_common >= ChannelAttentionT<T>::kBottleneckRatio && c_common % 2 == 0,
             "c_common must be even and >= 4");
  for (int i = 0; i < 3; ++i) {
    const int level = 3 + i;
    proj_[i] = Conv2dT<T>(reg, prefix + ".proj" + std::to_string(level),
                          cfg.channels[level - 1], c_common, 1, 0, rng);
  }
  cu00_ = ConvUnitT<T>(reg, prefix + ".cu00", c_common, c_common, rng);
  cu10_ = ConvUnitT<T>(reg, prefix + ".cu10", c_common, c_common, rng);
  cu01_ = ConvUnitT<T>(reg, prefix + ".cu01", c_common, c_common, rng);
  cu20_ = ConvUnitT<T>(reg, prefix + ".cu20", c_common, c_common, rng);
  cu11_ = ConvUnitT<T>(reg, prefix + ".cu11", c_common, c_common, rng);
  cu02_ = ConvUnitT<T>(reg, prefix + ".cu02", c_common, c_common, rng);
  for (int i = 0; i < 3; ++i) {
    const std::string lv = std::to_string(3 + i);
    ca_[i] = ChannelAttentionT<T>(reg, prefix + ".ca" + lv, c_common, rng);
    sa_[i] = SpatialAttentionT<T>(reg, prefix + ".sa" + lv, rng);
  }
  gc1_ = Conv2dT<T>(reg, prefix + ".gc1", c_common, c_common, 3, 1, rng);
  gc2_ = Conv2dT<T>(reg, prefix + ".gc2", c_common, c_common, 3, 1, rng);
}

template <typename T>
TensorT<T> CcaT<T>::project_common(const TensorT<T>& f, int level) const {
  CAAI_CHECK(level >= 3 && level <= 5, "project_common level must be 3..5");
  return relu(proj_[level - 3](f));
}

template <typename T>
typename CcaT<T>::Interacted CcaT<T>::feature_interaction(const TensorT<T>& f3,
                                                          const TensorT<T>& f4,
                                                          const TensorT<T>& f5,
                                                          bool zero_cross_level) const {
  const int h3 = f3.dim(2), w3 = f3.dim(3);
  const int h4 = f4.dim(2), w4 = f4.dim(3);
  const int h5 = f5.dim(2), w5 = f5.dim(3);
  CAAI_CHECK(h4 * 2 == h3 && h5 * 2 == h4 && w4 * 2 == w3 && w5 * 2 == w4,
             "interaction inputs must halve per level");

  // Node (j,k) lives at level 3+j resolution; each cross-resolution edge is
  // resampled to the consumer's size before the addition.
  auto cross = [&](const TensorT<T>& t, int th, int tw) { return resample(t, th, tw); };

  auto f00 = cu00_(f3);
  auto f10 = zero_cross_level ? cu10_(f4) : cu10_(add(f4, cross(f00, h4, w4)));
  auto f01 = zero_cross_level ? cu01_(f00) : cu01_(add(f00, cross(f10, h3, w3)));
  auto f20 = zero_cross_level ? cu20_(f5) : cu20_(add(f5, cross(f10, h5, w5)));
  auto f11 = zero_cross_level
                 ? cu11_(f10)
                 : cu11_(add(add(f10, cross(f20, h4, w4)), cross(f01, h4, w4)));
  auto f02 = zero_cross_level ? cu02_(f01) : cu02_(add(cross(f11, h3, w3), f01));

  CAAI_CHECK(f02.dim(2) == h3 && f11.dim(2) == h4 && f20.dim(2) == h5,
             "interaction output resolution mismatch");
  return {f02, f11, f20};
}

template <typename T>
typename CcaT<T>::Output CcaT<T>::complementary_attention(const TensorT<T>& f3p,
                                                          const TensorT<T>& f4p,
                                                          const TensorT<T>& f5p) const {
  Output out;
  out.s3 = sa_[0](ca_[0](f3p));
  out.s4 = sa_[1](ca_[1](f4p));
  out.s5 = sa_[2](ca_[2](f5p));
  out.w3 = reverse(sigmoid(out.s3));
  out.w4 = reverse(sigmoid(out.s4));
  out.w5 = reverse(sigmoid(out.s5));
  out.fhat3 = complement_gate(out.s3, out.s4);
  out.fhat4 = complement_gate(out.s4, out.s5);
  return out;
}

template <typename T>
TensorT<T> CcaT<T>::global_context(const TensorT<T>& f5p, const TensorT<T>& w5) const {
  auto residual = relu(gc2_(relu(gc1_(f5p))));
  return mul(w5, add(f5p, residual));
}

template <typename T>
typename CcaT<T>::Output CcaT<T>::run(const FeaturePyramidT<T>& pyramid) const {
  auto p3 = project_common(pyramid.level(3), 3);
  auto p4 = project_common(pyramid.level(4), 4);
  auto p5 = project_common(pyramid.level(5), 5);
  auto inter = feature_interaction(p3, p4, p5);
  auto out = complementary_attention(inter.f3p, inter.f4p, inter.f5p);
  out.fhat5 = global_context(inter.f5p, out.w5);
  return out;
}

#define CAAI_INSTANTIATE_CCA(T)                                           \
  template struct ChannelAttentionT<T>;                                   \
  template struct SpatialAttentionT<T>;                                   \
  template struct ConvUnitT<T>;                                           \
  template TensorT<T> complement_gate<T>(const TensorT<T>&, const TensorT<T>&); \
  template class CcaT<T>;

CAAI_INSTANTIATE_CCA(float)
CAAI_INSTANTIATE_CCA(double)

#undef CAAI_INSTANTIATE_CCA

}  // namespace caai
