#include "caai/afi.hpp"

namespace caai {

template <typename T>
TensorT<T> adaptive_mix(const TensorT<T>& fh, const TensorT<T>& h, const TensorT<T>& d,
                        const TensorT<T>& k) {
  CAAI_CHECK(h.shape() == fh.shape() && d.shape() == fh.shape(),
             "adaptive_mix: channel/shape mismatch between rgb, enhanced, and depth parts");
  auto avg = mul(add(h, d), T(0.5));
  return add(mul(reverse(k), fh), mul(k, avg));
}

template <typename T>
AfiLevelT<T>::AfiLevelT(ParamRegistryT<T>& reg, const std::string& name, int channels,
                        int guide_channels, Rng& rng)
    : channels(channels) {
  CAAI_CHECK(channels >= 2 && channels % 2 == 0,
             "fusion level channels must be even, got " + std::to_string(channels));
  const int half = channels / 2;
  gate_n = Conv2dT<T>(reg, name + ".gate_n", guide_channels, half, 1, 0, rng);
  gate_m = Conv2dT<T>(reg, name + ".gate_m", guide_channels, half, 3, 1, rng);
  branch_a = Conv2dT<T>(reg, name + ".branch_a", channels, half, 3, 1, rng);
  branch_b = Conv2dT<T>(reg, name + ".branch_b", channels, half, 3, 1, rng);
  depth1 = Conv2dT<T>(reg, name + ".depth1", channels, channels, 3, 1, rng);
  depth2 = Conv2dT<T>(reg, name + ".depth2", channels, channels, 3, 1, rng);
  depth_act1 = PReluT<T>(reg, name + ".depth_act1", rng);
  depth_act2 = PReluT<T>(reg, name + ".depth_act2", rng);
  coeff_k = Conv2dT<T>(reg, name + ".coeff_k", channels, channels, 1, 0, rng);
}

template <typename T>
typename AfiLevelT<T>::Parts AfiLevelT<T>::fuse(const TensorT<T>& fh, const TensorT<T>& fd,
                                                const TensorT<T>& guide) const {
  CAAI_CHECK(fh.shape() == fd.shape(), "fuse: rgb and depth features must share shape, got " +
                                           shape_str(fh.shape()) + " vs " +
                                           shape_str(fd.shape()));
  const int h = fh.dim(2), w = fh.dim(3);

  Parts out;
  // Guidance comes from the coarser-to-finer neighbor; bring it to this
  // level's resolution before the gate convs.
  auto g = resample(guide, h, w);
  out.n = sigmoid(gate_n(g));
  out.m = sigmoid(gate_m(g));

  auto ha = resample(branch_a(fh), h, w);
  auto hb = resample(branch_b(fh), h, w);
  out.h = concat<T>({mul(out.n, ha), mul(out.m, hb)}, 1);

  out.d = depth_act2(depth2(depth_act1(depth1(fd))));

  out.k = sigmoid(coeff_k(global_avg_pool(fh)));  // N x C x 1 x 1

  auto fprime = adaptive_mix(fh, out.h, out.d, out.k);
  out.fused = concat<T>({fprime, fd}, 1);
  return out;
}

template <typename T>
ResidualUnitT<T>::ResidualUnitT(ParamRegistryT<T>& reg, const std::string& name,
                                int in_channels, int c_fuse, Rng& rng) {
  proj = Conv2dT<T>(reg, name + ".proj", in_channels, c_fuse, 1, 0, rng);
  b1 = Conv2dT<T>(reg, name + ".b1", in_channels, c_fuse, 3, 1, rng);
  b2 = Conv2dT<T>(reg, name + ".b2", c_fuse, c_fuse, 3, 1, rng);
}

template <typename T>
TensorT<T> ResidualUnitT<T>::operator()(const TensorT<T>& x, int out_h, int out_w) const {
  auto y = relu(add(proj(x), b2(relu(b1(x)))));
  return resample(y, out_h, out_w);
}

template <typename T>
AfiT<T>::AfiT(ParamRegistryT<T>& reg, const std::string& prefix, const BackboneConfig& cfg,
              int c_common, int c_fuse, Rng& rng)
    : c_fuse_(c_fuse) {
  static const char* kStream[2] = {"rgb", "depth"};
  for (int s = 0; s < 2; ++s) {
    for (int lv = 0; lv < 2; ++lv) {
      low_sa_[s][lv] = SpatialAttentionT<T>(
          reg, prefix + ".low_sa." + kStream[s] + std::to_string(lv + 1), rng);
    }
  }
  // Channel count per level after refinement: backbone widths for 1-2,
  // common width for 3-5. Guidance is the refined RGB feature of the
  // previous level (level 1 guides itself).
  for (int i = 0; i < 5; ++i) {
    const int c = i < 2 ? cfg.channels[i] : c_common;
    int guide_c;
    if (i == 0) {
      guide_c = cfg.channels[0];
    } else if (i <= 2) {
      guide_c = cfg.channels[i - 1];
    } else {
      guide_c = c_common;
    }
    levels_[i] = AfiLevelT<T>(reg, prefix + ".level" + std::to_string(i + 1), c, guide_c, rng);
    residuals_[i] =
        ResidualUnitT<T>(reg, prefix + ".residual" + std::to_string(i + 1), 2 * c, c_fuse, rng);
  }
}

template <typename T>
TensorT<T> AfiT<T>::low_level_refine(const TensorT<T>& f, int stream, int level) const {
  CAAI_CHECK(stream == 0 || stream == 1, "stream must be 0 (rgb) or 1 (depth)");
  CAAI_CHECK(level == 1 || level == 2, "low_level_refine handles levels 1-2");
  return low_sa_[stream][level - 1](f);
}

template <typename T>
TensorT<T> AfiT<T>::fuse_all(const std::array<TensorT<T>, 5>& parts) {
  for (int i = 1; i < 5; ++i) {
    CAAI_CHECK(parts[i].shape() == parts[0].shape(),
               "fuse_all: shape mismatch between level outputs: " +
                   shape_str(parts[0].shape()) + " vs " + shape_str(parts[i].shape()));
  }
  auto acc = add(parts[0], parts[1]);
  acc = add(acc, parts[2]);
  acc = add(acc, parts[3]);
  acc = add(acc, parts[4]);
  return acc;
}

template <typename T>
TensorT<T> AfiT<T>::run(const std::array<TensorT<T>, 5>& rgb,
                        const std::array<TensorT<T>, 5>& depth) const {
  // Common fusion resolution: level-2 size (half the input).
  const int out_h = rgb[1].dim(2), out_w = rgb[1].dim(3);
  std::array<TensorT<T>, 5> fused;
  for (int i = 0; i < 5; ++i) {
    const TensorT<T>& guide = i == 0 ? rgb[0] : rgb[i - 1];
    auto parts = levels_[i].fuse(rgb[i], depth[i], guide);
    fused[i] = residuals_[i](parts.fused, out_h, out_w);
  }
  return fuse_all(fused);
}

#define CAAI_INSTANTIATE_AFI(T)                                                        \
  template TensorT<T> adaptive_mix<T>(const TensorT<T>&, const TensorT<T>&,            \
                                      const TensorT<T>&, const TensorT<T>&);           \
  template struct AfiLevelT<T>;                                                        \
  template struct ResidualUnitT<T>;                                                    \
  template class AfiT<T>;

CAAI_INSTANTIATE_AFI(float)
CAAI_INSTANTIATE_AFI(double)

#undef CAAI_INSTANTIATE_AFI

}  // namespace caai
