#include <doctest.h>

#include <set>

#include "caai/backbone.hpp"
#include "caai/gradcheck.hpp"

using namespace caai;

TEST_SUITE_BEGIN("backbone");

namespace {

Tensor64 rand64(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                bool rg = false) {
  auto t = Tensor64::zeros(std::move(shape), rg);
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("default desk config yields the documented shape schedule") {
  ParamRegistryT<double> reg;
  Rng rng(1);
  BackboneConfig cfg;  // [8,16,32,64,64], input 64
  BackboneT<double> bb(reg, "rgb", cfg, 3, rng);
  auto x = Tensor64::zeros({1, 3, 64, 64});
  auto pyr = bb.extract(x);
  CHECK(pyr.level(1).shape() == std::vector<int>{1, 8, 64, 64});
  CHECK(pyr.level(2).shape() == std::vector<int>{1, 16, 32, 32});
  CHECK(pyr.level(3).shape() == std::vector<int>{1, 32, 16, 16});
  CHECK(pyr.level(4).shape() == std::vector<int>{1, 64, 8, 8});
  CHECK(pyr.level(5).shape() == std::vector<int>{1, 64, 4, 4});
}

TEST_CASE("shape schedule holds for any input size divisible by 16") {
  for (int s : {16, 32, 48, 80}) {
    ParamRegistryT<double> reg;
    Rng rng(2);
    BackboneConfig cfg;
    cfg.channels = {2, 2, 4, 4, 4};
    cfg.convs_per_block = {1, 1, 1, 1, 1};
    cfg.input_size = s;
    BackboneT<double> bb(reg, "bb", cfg, 1, rng);
    auto pyr = bb.extract(Tensor64::zeros({2, 1, s, s}));
    for (int lv = 1; lv <= 5; ++lv) {
      CHECK(pyr.level(lv).dim(2) == s >> (lv - 1));
      CHECK(pyr.level(lv).dim(3) == s >> (lv - 1));
      CHECK(pyr.level(lv).dim(1) == cfg.channels[lv - 1]);
    }
  }
}

TEST_CASE("zero input with zero biases produces an all-zero pyramid") {
  ParamRegistryT<double> reg;
  Rng rng(3);
  BackboneConfig cfg;
  cfg.input_size = 32;
  BackboneT<double> bb(reg, "bb", cfg, 3, rng);  // biases init to zeros
  auto pyr = bb.extract(Tensor64::zeros({1, 3, 32, 32}));
  for (int lv = 1; lv <= 5; ++lv) {
    for (auto v : pyr.level(lv).data()) CHECK(v == 0.0);
  }
}

TEST_CASE("input validation: channels and spatial size") {
  ParamRegistryT<double> reg;
  Rng rng(4);
  BackboneConfig cfg;
  cfg.input_size = 32;
  BackboneT<double> bb(reg, "bb", cfg, 3, rng);
  CHECK_THROWS_AS((void)bb.extract(Tensor64::zeros({1, 1, 32, 32})), Error);
  CHECK_THROWS_AS((void)bb.extract(Tensor64::zeros({1, 3, 16, 16})), Error);
}

TEST_CASE("config validation rejects malformed setups") {
  BackboneConfig cfg;
  cfg.channels = {8, 16, 32};  // not five blocks
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = BackboneConfig{};
  cfg.input_size = 40;  // not a multiple of 16
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = BackboneConfig{};
  cfg.channels = {7, 16, 32, 64, 64};  // odd width
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("two streams share no parameters") {
  ParamRegistryT<double> reg;
  Rng rng(5);
  BackboneConfig cfg;
  cfg.input_size = 16;
  cfg.channels = {2, 2, 4, 4, 4};
  cfg.convs_per_block = {1, 1, 1, 1, 1};
  BackboneT<double> rgb(reg, "rgb.backbone", cfg, 3, rng);
  BackboneT<double> depth(reg, "depth.backbone", cfg, 1, rng);
  std::set<std::string> names;
  std::set<const void*> impls;
  for (const auto& e : reg.entries()) {
    names.insert(e.name);
    impls.insert(e.tensor.impl().get());
  }
  CHECK(names.size() == reg.entries().size());   // no name collisions
  CHECK(impls.size() == reg.entries().size());   // no shared buffers
  int rgb_count = 0, depth_count = 0;
  for (const auto& e : reg.entries()) {
    if (e.name.rfind("rgb.", 0) == 0) ++rgb_count;
    if (e.name.rfind("depth.", 0) == 0) ++depth_count;
  }
  CHECK(rgb_count == depth_count);
  CHECK(rgb_count + depth_count == static_cast<int>(reg.entries().size()));
}

TEST_CASE("gradient of sum(f5) w.r.t. first-block weights is finite, nonzero, and") {
  // matches finite differences on spot-checked coordinates
  Rng rng(6);
  ParamRegistryT<double> reg;
  BackboneConfig cfg;
  cfg.channels = {2, 2, 4, 4, 4};
  cfg.convs_per_block = {1, 1, 1, 1, 1};
  cfg.input_size = 16;
  Rng init(99);
  BackboneT<double> bb(reg, "bb", cfg, 3, init);
  for (auto& e : reg.entries()) {
    for (auto& v : e.tensor.mutable_data()) v = rng.uniform(0.02, 0.25);
  }
  auto x = rand64({1, 3, 16, 16}, rng, 0.2, 1.0, true);

  auto first_w = reg.entries()[0].tensor;
  {
    AutodiffScope<double> scope;
    backward(sum(bb.extract(x).level(5)));
  }
  REQUIRE(first_w.has_grad());
  int nonzero = 0;
  for (auto g : first_w.grad()) {
    CHECK(std::isfinite(g));
    if (g != 0.0) ++nonzero;
  }
  CHECK(nonzero > 0);
  reg.clear_grads();

  auto f = [&] { return sum(bb.extract(x).level(5)); };
  auto stats = gradcheck::check_gradients(f, {first_w}, 1e-3, rng, 3);
  CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("full backbone gradient check") {
  auto res = gradcheck::check_backbone(7);
  CHECK(res.passed());
}

TEST_SUITE_END();
