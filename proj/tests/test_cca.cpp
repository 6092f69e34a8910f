#include <doctest.h>

#include <cmath>
#include <cstring>

#include "caai/cca.hpp"
#include "caai/gradcheck.hpp"

using namespace caai;

TEST_SUITE_BEGIN("cca");

namespace {

Tensor64 rand64(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor64::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

void zero_params(ParamRegistryT<double>& reg) {
  for (auto& e : reg.entries()) {
    for (auto& v : e.tensor.mutable_data()) v = 0.0;
  }
}

BackboneConfig tiny_cfg() {
  BackboneConfig cfg;
  cfg.channels = {2, 2, 8, 8, 8};
  cfg.convs_per_block = {1, 1, 1, 1, 1};
  cfg.input_size = 32;  // level 3 at 8x8, level 4 at 4x4, level 5 at 2x2
  return cfg;
}

}  // namespace

TEST_CASE("project_common maps any level width to the common width") {
  ParamRegistryT<double> reg;
  Rng rng(1);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 4, rng);
  Rng drng(2);
  auto f3 = rand64({1, 8, 8, 8}, drng);
  auto f4 = rand64({1, 8, 4, 4}, drng);
  CHECK(cca.project_common(f3, 3).shape() == std::vector<int>{1, 4, 8, 8});
  CHECK(cca.project_common(f4, 4).shape() == std::vector<int>{1, 4, 4, 4});
  CHECK_THROWS_AS((void)cca.project_common(f3, 6), Error);

  zero_params(reg);
  auto z = cca.project_common(f3, 3);
  for (auto v : z.data()) CHECK(v == 0.0);  // zero weights, zero bias
}

TEST_CASE("feature_interaction: zero inputs give zero outputs; resolutions are per level") {
  ParamRegistryT<double> reg;
  Rng rng(3);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 4, rng);
  auto z3 = Tensor64::zeros({1, 4, 8, 8});
  auto z4 = Tensor64::zeros({1, 4, 4, 4});
  auto z5 = Tensor64::zeros({1, 4, 2, 2});
  auto out = cca.feature_interaction(z3, z4, z5);
  CHECK(out.f3p.shape() == std::vector<int>{1, 4, 8, 8});
  CHECK(out.f4p.shape() == std::vector<int>{1, 4, 4, 4});
  CHECK(out.f5p.shape() == std::vector<int>{1, 4, 2, 2});
  for (auto v : out.f3p.data()) CHECK(v == 0.0);
  for (auto v : out.f4p.data()) CHECK(v == 0.0);
  for (auto v : out.f5p.data()) CHECK(v == 0.0);
}

TEST_CASE("feature_interaction dependency order: a level-5 perturbation reaches f3'") {
  ParamRegistryT<double> reg;
  Rng rng(4);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 4, rng);
  // positive weights so relu cannot swallow the perturbation
  for (auto& e : reg.entries()) {
    for (auto& v : e.tensor.mutable_data()) v = rng.uniform(0.05, 0.3);
  }
  Rng drng(5);
  auto f3 = rand64({1, 4, 8, 8}, drng, 0.1, 1.0);
  auto f4 = rand64({1, 4, 4, 4}, drng, 0.1, 1.0);
  auto f5 = rand64({1, 4, 2, 2}, drng, 0.1, 1.0);

  auto base = cca.feature_interaction(f3, f4, f5);
  f5.mutable_data()[0] += 0.5;
  auto bumped = cca.feature_interaction(f3, f4, f5);

  double delta3 = 0.0, delta4 = 0.0;
  for (std::int64_t i = 0; i < base.f3p.numel(); ++i) {
    delta3 += std::fabs(bumped.f3p.data()[i] - base.f3p.data()[i]);
  }
  for (std::int64_t i = 0; i < base.f4p.numel(); ++i) {
    delta4 += std::fabs(bumped.f4p.data()[i] - base.f4p.data()[i]);
  }
  CHECK(delta3 > 0.0);  // path f20 -> f11 -> f02
  CHECK(delta4 > 0.0);  // path f20 -> f11
}

TEST_CASE("ablation hook: zeroed cross-level terms reduce to chained per-level units") {
  ParamRegistryT<double> reg;
  Rng rng(6);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 4, rng);
  Rng drng(7);
  auto f3 = rand64({1, 4, 8, 8}, drng);
  auto f4 = rand64({1, 4, 4, 4}, drng);
  auto f5 = rand64({1, 4, 2, 2}, drng);

  auto ablated = cca.feature_interaction(f3, f4, f5, /*zero_cross_level=*/true);

  // reproduce the expected chains with the same conv-unit parameters
  const auto& entries = reg.entries();
  auto unit = [&](const std::string& name, const Tensor64& in) {
    const auto* w = reg.find("cca." + name + ".weight");
    const auto* b = reg.find("cca." + name + ".bias");
    REQUIRE(w != nullptr);
    REQUIRE(b != nullptr);
    return relu(conv2d(in, w->tensor, b->tensor, 1, 1));
  };
  (void)entries;
  auto f20 = unit("cu20", f5);
  auto f10 = unit("cu10", f4);
  auto f11 = unit("cu11", f10);
  auto f02 = unit("cu02", unit("cu01", unit("cu00", f3)));
  for (std::int64_t i = 0; i < f20.numel(); ++i) CHECK(ablated.f5p.data()[i] == f20.data()[i]);
  for (std::int64_t i = 0; i < f11.numel(); ++i) CHECK(ablated.f4p.data()[i] == f11.data()[i]);
  for (std::int64_t i = 0; i < f02.numel(); ++i) CHECK(ablated.f3p.data()[i] == f02.data()[i]);
}

TEST_CASE("channel attention: zero parameters halve the input; weights stay in (0,1)") {
  ParamRegistryT<double> reg;
  Rng rng(8);
  ChannelAttentionT<double> ca(reg, "ca", 4, rng);
  zero_params(reg);
  Rng drng(9);
  auto x = rand64({1, 4, 2, 2}, drng);
  auto y = ca(x);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(x.data()[i] * 0.5).epsilon(1e-15));
  }
  CHECK_THROWS_AS(ChannelAttentionT<double>(reg, "ca2", 2, rng), Error);  // below ratio
}

TEST_CASE("channel attention scales each channel by its own weight") {
  ParamRegistryT<double> reg;
  Rng rng(10);
  ChannelAttentionT<double> ca(reg, "ca", 4, rng);
  Rng drng(11);
  auto x = rand64({1, 4, 2, 2}, drng);
  auto y = ca(x);

  // independent recomputation of the weight vector
  auto pooled = global_avg_pool(x);
  auto w = sigmoid(ca.fc2(relu(ca.fc1(pooled))));
  for (int c = 0; c < 4; ++c) {
    const double wc = w.data()[c];
    CHECK(wc > 0.0);
    CHECK(wc < 1.0);
    for (int i = 0; i < 4; ++i) {
      CHECK(y.data()[c * 4 + i] == doctest::Approx(x.data()[c * 4 + i] * wc).epsilon(1e-14));
    }
  }
}

TEST_CASE("spatial attention: zero conv halves input; map is single-channel") {
  ParamRegistryT<double> reg;
  Rng rng(12);
  SpatialAttentionT<double> sa(reg, "sa", rng);
  zero_params(reg);
  Rng drng(13);
  auto x = rand64({1, 3, 4, 4}, drng);
  auto y = sa(x);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(x.data()[i] * 0.5).epsilon(1e-15));
  }
}

TEST_CASE("spatial attention equals x times its weight map") {
  ParamRegistryT<double> reg;
  Rng rng(14);
  SpatialAttentionT<double> sa(reg, "sa", rng);
  Rng drng(15);
  auto x = rand64({1, 3, 4, 4}, drng);
  auto a = sa.weight_map(x);
  CHECK(a.shape() == std::vector<int>{1, 1, 4, 4});
  auto y = sa(x);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 16; ++i) {
      CHECK(y.data()[c * 16 + i] ==
            doctest::Approx(x.data()[c * 16 + i] * a.data()[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("complementary attention: weight identity and resolutions") {
  ParamRegistryT<double> reg;
  Rng rng(16);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 4, rng);
  Rng drng(17);
  auto f3 = rand64({2, 4, 8, 8}, drng);
  auto f4 = rand64({2, 4, 4, 4}, drng);
  auto f5 = rand64({2, 4, 2, 2}, drng);
  auto out = cca.complementary_attention(f3, f4, f5);

  CHECK(out.fhat3.shape() == std::vector<int>{2, 4, 8, 8});
  CHECK(out.fhat4.shape() == std::vector<int>{2, 4, 4, 4});

  // w_i + sigmoid(S_i) == 1 elementwise, and w_i in [0,1]
  const Tensor64* ws[] = {&out.w3, &out.w4, &out.w5};
  const Tensor64* ss[] = {&out.s3, &out.s4, &out.s5};
  for (int i = 0; i < 3; ++i) {
    auto sig = sigmoid(*ss[i]);
    for (std::int64_t j = 0; j < ws[i]->numel(); ++j) {
      const double w = ws[i]->data()[j];
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      CHECK(std::fabs(w + sig.data()[j] - 1.0) <= 4 * std::numeric_limits<double>::epsilon());
    }
  }
}

TEST_CASE("complement gate with S_i = 0 is exactly half the upsampled next level") {
  Rng drng(18);
  auto s_zero = Tensor64::zeros({1, 4, 8, 8});
  auto s_next = rand64({1, 4, 4, 4}, drng);
  auto gated = complement_gate(s_zero, s_next);
  auto expected = mul(resample(s_next, 8, 8), 0.5);
  CHECK(std::memcmp(gated.data().data(), expected.data().data(),
                    sizeof(double) * gated.numel()) == 0);
}

TEST_CASE("global context: zero convs reduce to the gated feature; zero input stays zero") {
  ParamRegistryT<double> reg;
  Rng rng(19);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 4, rng);
  Rng drng(20);
  auto f5 = rand64({1, 4, 2, 2}, drng);
  auto w5 = rand64({1, 4, 2, 2}, drng, 0.0, 1.0);

  // zero only the global-context convs
  for (const char* name : {"cca.gc1.weight", "cca.gc1.bias", "cca.gc2.weight", "cca.gc2.bias"}) {
    const auto* e = reg.find(name);
    REQUIRE(e != nullptr);
    for (auto& v : const_cast<Tensor64&>(e->tensor).mutable_data()) v = 0.0;
  }
  auto out = cca.global_context(f5, w5);
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out.data()[i] == doctest::Approx(w5.data()[i] * f5.data()[i]).epsilon(1e-15));
  }

  auto zero_out = cca.global_context(Tensor64::zeros({1, 4, 2, 2}), w5);
  for (auto v : zero_out.data()) CHECK(v == 0.0);
}

TEST_CASE("global context matches an independent recomputation") {
  ParamRegistryT<double> reg;
  Rng rng(21);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 8, rng);
  Rng drng(22);
  auto f5 = rand64({1, 8, 4, 4}, drng);
  auto w5 = rand64({1, 8, 4, 4}, drng, 0.0, 1.0);
  auto out = cca.global_context(f5, w5);

  const auto* g1w = reg.find("cca.gc1.weight");
  const auto* g1b = reg.find("cca.gc1.bias");
  const auto* g2w = reg.find("cca.gc2.weight");
  const auto* g2b = reg.find("cca.gc2.bias");
  auto branch = relu(conv2d(relu(conv2d(f5, g1w->tensor, g1b->tensor, 1, 1)), g2w->tensor,
                            g2b->tensor, 1, 1));
  auto expected = mul(w5, add(f5, branch));
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("CCA output is invariant to batch permutation") {
  ParamRegistryT<double> reg;
  Rng rng(23);
  CcaT<double> cca(reg, "cca", tiny_cfg(), 4, rng);
  Rng drng(24);

  FeaturePyramidT<double> pyr;
  pyr.levels[2] = rand64({3, 8, 8, 8}, drng);
  pyr.levels[3] = rand64({3, 8, 4, 4}, drng);
  pyr.levels[4] = rand64({3, 8, 2, 2}, drng);
  auto base = cca.run(pyr);

  // permutation (2, 0, 1) of the batch axis
  const int perm[3] = {2, 0, 1};
  FeaturePyramidT<double> shuffled;
  for (int lv = 2; lv <= 4; ++lv) {
    const auto& src = pyr.levels[lv];
    auto dst = Tensor64::zeros(src.shape());
    const std::int64_t chw = src.numel() / src.dim(0);
    for (int b = 0; b < 3; ++b) {
      std::memcpy(dst.mutable_data().data() + b * chw, src.data().data() + perm[b] * chw,
                  sizeof(double) * chw);
    }
    shuffled.levels[lv] = dst;
  }
  auto permuted = cca.run(shuffled);

  auto check_perm = [&](const Tensor64& a, const Tensor64& b) {
    const std::int64_t chw = a.numel() / a.dim(0);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::memcmp(b.data().data() + i * chw, a.data().data() + perm[i] * chw,
                        sizeof(double) * chw) == 0);
    }
  };
  check_perm(base.fhat3, permuted.fhat3);
  check_perm(base.fhat4, permuted.fhat4);
  check_perm(base.fhat5, permuted.fhat5);
}

TEST_CASE("end-to-end CCA gradients pass finite differences") {
  auto res = gradcheck::check_cca(31);
  CHECK(res.passed());
}

TEST_SUITE_END();
