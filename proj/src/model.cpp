#include "caai/model.hpp"

namespace caai {

void ModelConfig::validate() const {
  backbone.validate();
  CAAI_CHECK(c_common >= 4 && c_common % 2 == 0, "c_common must be even and >= 4");
  CAAI_CHECK(c_fuse >= 1, "c_fuse must be positive");
  CAAI_CHECK(depth_channels == 1 || depth_channels == 3, "depth_channels must be 1 or 3");
}

template <typename T>
ModelT<T>::ModelT(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  rgb_backbone_ = BackboneT<T>(params_, "rgb.backbone", cfg_.backbone, 3, rng);
  depth_backbone_ =
      BackboneT<T>(params_, "depth.backbone", cfg_.backbone, cfg_.depth_channels, rng);
  rgb_cca_ = CcaT<T>(params_, "rgb.cca", cfg_.backbone, cfg_.c_common, rng);
  depth_cca_ = CcaT<T>(params_, "depth.cca", cfg_.backbone, cfg_.c_common, rng);
  afi_ = AfiT<T>(params_, "afi", cfg_.backbone, cfg_.c_common, cfg_.c_fuse, rng);
  head1_ = Conv2dT<T>(params_, "head.conv1", cfg_.c_fuse, cfg_.c_fuse, 3, 1, rng);
  head2_ = Conv2dT<T>(params_, "head.conv2", cfg_.c_fuse, 1, 1, 0, rng);
}

template <typename T>
TensorT<T> ModelT<T>::forward(const TensorT<T>& rgb, const TensorT<T>& depth) const {
  const int s = cfg_.backbone.input_size;
  CAAI_CHECK(rgb.rank() == 4 && depth.rank() == 4, "forward inputs must be NCHW");
  CAAI_CHECK(rgb.dim(0) == depth.dim(0), "forward: rgb/depth batch mismatch");

  auto rgb_pyr = rgb_backbone_.extract(rgb);
  auto depth_pyr = depth_backbone_.extract(depth);

  std::array<TensorT<T>, 5> rgb_feats, depth_feats;
  for (int lv = 1; lv <= 2; ++lv) {
    rgb_feats[lv - 1] = afi_.low_level_refine(rgb_pyr.level(lv), 0, lv);
    depth_feats[lv - 1] = afi_.low_level_refine(depth_pyr.level(lv), 1, lv);
  }
  auto rgb_cca_out = rgb_cca_.run(rgb_pyr);
  auto depth_cca_out = depth_cca_.run(depth_pyr);
  rgb_feats[2] = rgb_cca_out.fhat3;
  rgb_feats[3] = rgb_cca_out.fhat4;
  rgb_feats[4] = rgb_cca_out.fhat5;
  depth_feats[2] = depth_cca_out.fhat3;
  depth_feats[3] = depth_cca_out.fhat4;
  depth_feats[4] = depth_cca_out.fhat5;

  auto fused = afi_.run(rgb_feats, depth_feats);
  auto logits = head2_(relu(head1_(fused)));
  return resample(sigmoid(logits), s, s);
}

template <typename T>
TensorT<T> saliency_loss(const TensorT<T>& pred, const TensorT<T>& gt) {
  if (pred.shape() != gt.shape()) {
    fail("loss: prediction shape " + shape_str(pred.shape()) +
         " does not match ground truth " + shape_str(gt.shape()));
  }
  return bce_mean(pred, gt, T(1e-7));
}

namespace {

std::int64_t conv_count(int cin, int cout, int k) {
  return static_cast<std::int64_t>(cout) * cin * k * k + cout;
}

std::int64_t sa_count() { return conv_count(2, 1, 5); }

std::int64_t ca_count(int c) { return conv_count(c, c / 4, 1) + conv_count(c / 4, c, 1); }

std::int64_t backbone_count(const BackboneConfig& b, int in_channels) {
  std::int64_t total = 0;
  int cin = in_channels;
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k < b.convs_per_block[i]; ++k) {
      total += conv_count(cin, b.channels[i], 3);
      cin = b.channels[i];
    }
  }
  return total;
}

std::int64_t cca_count(const BackboneConfig& b, int cc) {
  std::int64_t total = 0;
  for (int lv = 3; lv <= 5; ++lv) total += conv_count(b.channels[lv - 1], cc, 1);
  total += 6 * conv_count(cc, cc, 3);             // interaction lattice
  total += 3 * (ca_count(cc) + sa_count());       // attention per level
  total += 2 * conv_count(cc, cc, 3);             // global context branch
  return total;
}

std::int64_t afi_count(const BackboneConfig& b, int cc, int cf) {
  std::int64_t total = 4 * sa_count();  // low-level refinement, 2 streams x 2 levels
  for (int i = 0; i < 5; ++i) {
    const int c = i < 2 ? b.channels[i] : cc;
    const int guide = i == 0 ? b.channels[0] : (i <= 2 ? b.channels[i - 1] : cc);
    total += conv_count(guide, c / 2, 1);  // gate n
    total += conv_count(guide, c / 2, 3);  // gate m
    total += 2 * conv_count(c, c / 2, 3);  // rgb branches
    total += 2 * conv_count(c, c, 3) + 2;  // depth path + two prelu slopes
    total += conv_count(c, c, 1);          // coefficient k
    total += conv_count(2 * c, cf, 1) + conv_count(2 * c, cf, 3) + conv_count(cf, cf, 3);
  }
  return total;
}

}  // namespace

std::int64_t analytic_param_count(const ModelConfig& cfg) {
  const auto& b = cfg.backbone;
  std::int64_t total = backbone_count(b, 3) + backbone_count(b, cfg.depth_channels);
  total += 2 * cca_count(b, cfg.c_common);
  total += afi_count(b, cfg.c_common, cfg.c_fuse);
  total += conv_count(cfg.c_fuse, cfg.c_fuse, 3) + conv_count(cfg.c_fuse, 1, 1);  // head
  return total;
}

template class ModelT<float>;
template class ModelT<double>;
template TensorT<float> saliency_loss<float>(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> saliency_loss<double>(const TensorT<double>&, const TensorT<double>&);

}  // namespace caai
