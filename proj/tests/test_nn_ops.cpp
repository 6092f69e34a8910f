#include <doctest.h>

#include <cmath>

#include "caai/gradcheck.hpp"
#include "caai/nn_ops.hpp"
#include "oracles.hpp"

using namespace caai;

TEST_SUITE_BEGIN("nn_ops");

namespace {

Tensor64 rand64(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                bool rg = false) {
  auto t = Tensor64::zeros(std::move(shape), rg);
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv2d counts overlaps on an all-ones 3x3 case") {
  auto x = Tensor64::full({1, 1, 3, 3}, 1.0);
  auto w = Tensor64::full({1, 1, 3, 3}, 1.0);
  auto b = Tensor64::zeros({1});
  auto y = conv2d(x, w, b, 1, 1);
  CHECK(y.shape() == std::vector<int>{1, 1, 3, 3});
  CHECK(y.data()[4] == 9.0);  // center sees the full kernel
  CHECK(y.data()[0] == 4.0);  // corners see a 2x2 overlap
  CHECK(y.data()[1] == 6.0);  // edges see 2x3
}

TEST_CASE("identity 1x1 kernel reproduces the input") {
  Rng rng(5);
  auto x = rand64({2, 1, 4, 4}, rng);
  auto w = Tensor64::full({1, 1, 1, 1}, 1.0);
  auto b = Tensor64::zeros({1});
  auto y = conv2d(x, w, b, 1, 0);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d validates channels, kernel size, and output size") {
  auto x = Tensor64::zeros({1, 3, 4, 4});
  auto w = Tensor64::zeros({2, 4, 3, 3});
  auto b = Tensor64::zeros({2});
  CHECK_THROWS_AS((void)conv2d(x, w, b, 1, 1), Error);  // channel mismatch

  auto w2 = Tensor64::zeros({2, 3, 2, 2});
  CHECK_THROWS_AS((void)conv2d(x, w2, b, 1, 0), Error);  // kernel not in {1,3,5}

  auto tiny = Tensor64::zeros({1, 3, 2, 2});
  auto w5 = Tensor64::zeros({2, 3, 5, 5});
  CHECK_THROWS_AS((void)conv2d(tiny, w5, b, 1, 0), Error);  // degenerate output
}

TEST_CASE("conv2d forward and grads match the direct summation oracle") {
  Rng rng(17);
  auto x = rand64({2, 3, 5, 5}, rng, -1.0, 1.0, true);
  auto w = rand64({4, 3, 3, 3}, rng, -1.0, 1.0, true);
  auto b = rand64({4}, rng, -0.5, 0.5, true);

  auto y = conv2d(x, w, b, 1, 1);
  std::vector<double> xv(x.data().begin(), x.data().end());
  std::vector<double> wv(w.data().begin(), w.data().end());
  std::vector<double> bv(b.data().begin(), b.data().end());
  auto oracle = oracles::conv2d_direct(xv, x.shape(), wv, w.shape(), bv, 1, 1);
  REQUIRE(oracle.shape == y.shape());
  for (size_t i = 0; i < oracle.data.size(); ++i) {
    CHECK(std::fabs(oracle.data[i] - y.data()[i]) <= 1e-10);
  }

  // grads under a random weighting
  auto r = rand64(y.shape(), rng);
  {
    AutodiffScope<double> scope;
    backward(sum(mul(conv2d(x, w, b, 1, 1), r)));
  }
  std::vector<double> gx, gw, gb;
  std::vector<double> rv(r.data().begin(), r.data().end());
  oracles::conv2d_direct_grads(xv, x.shape(), wv, w.shape(), rv, 1, 1, gx, gw, gb);
  for (size_t i = 0; i < gx.size(); ++i) CHECK(std::fabs(gx[i] - x.grad()[i]) <= 1e-10);
  for (size_t i = 0; i < gw.size(); ++i) CHECK(std::fabs(gw[i] - w.grad()[i]) <= 1e-10);
  for (size_t i = 0; i < gb.size(); ++i) CHECK(std::fabs(gb[i] - b.grad()[i]) <= 1e-10);
}

TEST_CASE("conv2d equals the oracle on randomized shapes including stride 2") {
  // property sweep: dims <= 8, kernels in {1,3,5}, strides in {1,2}
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng(seed * 131);
    const int kset[3] = {1, 3, 5};
    const int k = kset[rng.below(3)];
    const int n = 1 + static_cast<int>(rng.below(2));
    const int cin = 1 + static_cast<int>(rng.below(3));
    const int cout = 1 + static_cast<int>(rng.below(3));
    const int pad = static_cast<int>(rng.below(static_cast<std::uint64_t>(k / 2 + 1)));
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int minside = std::max(1, k - 2 * pad);
    const int h = minside + static_cast<int>(rng.below(8));
    const int w = minside + static_cast<int>(rng.below(8));

    auto x = rand64({n, cin, h, w}, rng);
    auto wt = rand64({cout, cin, k, k}, rng);
    auto b = rand64({cout}, rng, -0.5, 0.5);
    auto y = conv2d(x, wt, b, stride, pad);
    std::vector<double> xv(x.data().begin(), x.data().end());
    std::vector<double> wv(wt.data().begin(), wt.data().end());
    std::vector<double> bv(b.data().begin(), b.data().end());
    auto oracle = oracles::conv2d_direct(xv, x.shape(), wv, wt.shape(), bv, stride, pad);
    REQUIRE(oracle.shape == y.shape());
    for (size_t i = 0; i < oracle.data.size(); ++i) {
      CHECK(std::fabs(oracle.data[i] - y.data()[i]) <= 1e-10);
    }
  }
}

TEST_CASE("resample is the identity at the same size") {
  Rng rng(23);
  auto x = rand64({1, 2, 5, 5}, rng);
  auto y = resample(x, 5, 5);
  CHECK(y.impl() == x.impl());
}

TEST_CASE("bilinear upsample of [0,1] to width 4 gives the half-pixel values") {
  auto x = Tensor64::from_vector({1, 1, 1, 2}, {0.0, 1.0});
  auto y = resample(x, 1, 4);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 4});
  CHECK(y.data()[0] == doctest::Approx(0.0));
  CHECK(y.data()[1] == doctest::Approx(0.25));
  CHECK(y.data()[2] == doctest::Approx(0.75));
  CHECK(y.data()[3] == doctest::Approx(1.0));
}

TEST_CASE("resample preserves constants at arbitrary sizes") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    Rng rng(seed);
    const double c = rng.uniform(-2.0, 2.0);
    auto x = Tensor64::full({1, 1, 3, 5}, c);
    const int th = 1 + static_cast<int>(rng.below(9));
    const int tw = 1 + static_cast<int>(rng.below(9));
    auto y = resample(x, th, tw);
    for (auto v : y.data()) CHECK(v == doctest::Approx(c).epsilon(1e-14));
  }
}

TEST_CASE("resample is exact for linear ramps at corner-aligned integer scales") {
  // doubling a linear ramp keeps it linear; interior points interpolate exactly
  auto x = Tensor64::from_vector({1, 1, 1, 4}, {0.0, 1.0, 2.0, 3.0});
  auto y = resample(x, 1, 8);
  CHECK(y.data()[2] == doctest::Approx(0.75));
  CHECK(y.data()[3] == doctest::Approx(1.25));
  CHECK(y.data()[4] == doctest::Approx(1.75));
  auto down = resample(y, 1, 4);
  for (int i = 0; i < 4; ++i) CHECK(down.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("resample rejects non-positive targets") {
  auto x = Tensor64::zeros({1, 1, 2, 2});
  CHECK_THROWS_AS((void)resample(x, 0, 2), Error);
  CHECK_THROWS_AS((void)resample(x, 2, -1), Error);
}

TEST_CASE("global_avg_pool means and gradient") {
  auto c = Tensor64::full({2, 3, 4, 4}, 0.7);
  auto y = global_avg_pool(c);
  CHECK(y.shape() == std::vector<int>{2, 3, 1, 1});
  for (auto v : y.data()) CHECK(v == doctest::Approx(0.7));

  auto x = Tensor64::from_vector({1, 1, 2, 2}, {0, 1, 2, 3}, true);
  CHECK(global_avg_pool(x).item() == doctest::Approx(1.5));

  Rng rng(31);
  auto z = rand64({2, 3, 4, 4}, rng, -1.0, 1.0, true);
  auto r = rand64({2, 3, 1, 1}, rng);
  auto f = [&] { return sum(mul(global_avg_pool(z), r)); };
  auto stats = gradcheck::check_gradients(f, {z}, 1e-3, rng);
  CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("max_pool2x2 picks window maxima and routes gradient to them") {
  auto x = Tensor64::from_vector({1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 1, 6}, true);
  AutodiffScope<double> scope;
  auto y = max_pool2x2(x);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 2});
  CHECK(y.data()[0] == 5.0);
  CHECK(y.data()[1] == 6.0);
  backward(sum(y));
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[7] == 1.0);
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("init schemes: zeros, prelu constant, fan-in bound, determinism") {
  Rng rng(9);
  auto z = init_params<double>({4}, InitScheme::kZeros, rng);
  for (auto v : z.data()) CHECK(v == 0.0);

  auto s = init_params<double>({1}, InitScheme::kPReluSlope, rng);
  CHECK(s.item() == 0.25);

  // fan-in 3*3*3 = 27 -> bound 1/sqrt(27)
  Rng r1(123), r2(123);
  auto w1 = init_params<double>({4, 3, 3, 3}, InitScheme::kFanInUniform, r1);
  auto w2 = init_params<double>({4, 3, 3, 3}, InitScheme::kFanInUniform, r2);
  const double bound = 1.0 / std::sqrt(27.0);
  double maxabs = 0.0;
  for (std::int64_t i = 0; i < w1.numel(); ++i) {
    CHECK(w1.data()[i] == w2.data()[i]);  // same seed, identical tensors
    maxabs = std::max(maxabs, std::fabs(w1.data()[i]));
  }
  CHECK(maxabs <= bound);
  CHECK(maxabs > 0.2 * bound);  // actually random, not degenerate

  CHECK_THROWS_AS((void)init_scheme_from_name("bogus"), Error);
}

TEST_CASE("parameter registry keeps order, counts, and rejects duplicates") {
  ParamRegistryT<double> reg;
  Rng rng(1);
  auto w = reg.add("layer.weight", {2, 1, 3, 3}, InitScheme::kFanInUniform, rng);
  auto b = reg.add("layer.bias", {2}, InitScheme::kZeros, rng);
  CHECK(reg.total_params() == 20);
  CHECK(reg.entries()[0].name == "layer.weight");
  CHECK(reg.find("layer.bias") != nullptr);
  CHECK(reg.find("nope") == nullptr);
  CHECK(w.requires_grad());
  CHECK(b.requires_grad());
  CHECK_THROWS_AS((void)reg.add("layer.weight", {1}, InitScheme::kZeros, rng), Error);
}

TEST_CASE("all nn op gradients pass finite differences") {
  auto res = gradcheck::check_nn_ops(2024);
  CHECK(res.stats.max_rel_err < 1e-4);
  CHECK(res.stats.checked > 100);
}

TEST_SUITE_END();
