#include "caai/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "caai/cca.hpp"
#include "caai/model.hpp"

namespace caai::gradcheck {

namespace {

constexpr double kKinkTol = 2e-5;

std::vector<std::int64_t> pick_coords(std::int64_t numel, int max_coords, Rng& rng) {
  std::vector<std::int64_t> coords;
  if (max_coords < 0 || numel <= max_coords) {
    coords.resize(numel);
    for (std::int64_t i = 0; i < numel; ++i) coords[i] = i;
    return coords;
  }
  // deterministic sample without replacement
  std::vector<std::int64_t> all(numel);
  for (std::int64_t i = 0; i < numel; ++i) all[i] = i;
  for (int i = 0; i < max_coords; ++i) {
    const std::int64_t j = i + static_cast<std::int64_t>(rng.below(numel - i));
    std::swap(all[i], all[j]);
  }
  all.resize(max_coords);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

CheckStats check_gradients(const std::function<Tensor64()>& forward,
                           const std::vector<Tensor64>& leaves, double step, Rng& rng,
                           int max_coords_per_leaf) {
  std::vector<std::vector<double>> analytic;
  {
    AutodiffScope<double> scope;
    auto loss = forward();
    backward(loss);
  }
  for (const auto& leaf : leaves) {
    if (leaf.has_grad()) {
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    } else {
      analytic.emplace_back(leaf.numel(), 0.0);  // unreachable leaf
    }
  }

  auto eval = [&forward] { return static_cast<double>(forward().item()); };

  CheckStats stats;
  for (size_t l = 0; l < leaves.size(); ++l) {
    auto data = const_cast<TensorT<double>&>(leaves[l]).mutable_data();
    const auto coords = pick_coords(leaves[l].numel(), max_coords_per_leaf, rng);
    for (const std::int64_t c : coords) {
      const double orig = data[c];
      data[c] = orig + step;
      const double fp = eval();
      data[c] = orig - step;
      const double fm = eval();
      data[c] = orig + 2 * step;
      const double fp2 = eval();
      data[c] = orig - 2 * step;
      const double fm2 = eval();
      data[c] = orig;

      const double n1 = (fp - fm) / (2 * step);
      const double n2 = (fp2 - fm2) / (4 * step);
      const double scale = std::max({1.0, std::fabs(n1), std::fabs(n2)});
      if (std::fabs(n1 - n2) > kKinkTol * scale) {
        ++stats.skipped_non_smooth;
        continue;
      }
      const double a = analytic[l][c];
      const double rel = std::fabs(a - n1) / std::max({std::fabs(a), std::fabs(n1), 1.0});
      stats.max_rel_err = std::max(stats.max_rel_err, rel);
      ++stats.checked;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// per-module checks
// ---------------------------------------------------------------------------

namespace {

Tensor64 rand_tensor(std::vector<int> shape, Rng& rng, double lo, double hi,
                     bool requires_grad = true) {
  auto t = Tensor64::zeros(std::move(shape), requires_grad);
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// Mixed-sign values kept away from zero so activation kinks stay out of the
// FD step's reach.
Tensor64 rand_signed_margin(std::vector<int> shape, Rng& rng, double margin = 0.1) {
  auto t = Tensor64::zeros(std::move(shape), true);
  for (auto& v : t.mutable_data()) {
    const double mag = margin + rng.uniform(0.0, 1.0);
    v = rng.below(2) == 0 ? mag : -mag;
  }
  return t;
}

// Fixed weighting so every output element gets a distinct pull on the loss.
Tensor64 weighting_like(const Tensor64& t, Rng& rng) {
  return rand_tensor(t.shape(), rng, -1.0, 1.0, /*requires_grad=*/false);
}

void merge(CheckStats& into, const CheckStats& part) {
  into.max_rel_err = std::max(into.max_rel_err, part.max_rel_err);
  into.checked += part.checked;
  into.skipped_non_smooth += part.skipped_non_smooth;
}

// Force every parameter of a registry into a positive range: with positive
// inputs this keeps relu/prelu arguments strictly positive, so module-level
// graphs are smooth and the FD oracle is valid almost everywhere.
void make_params_positive(ParamRegistryT<double>& reg, Rng& rng) {
  for (auto& e : reg.entries()) {
    for (auto& v : e.tensor.mutable_data()) v = rng.uniform(0.02, 0.25);
  }
}

std::vector<Tensor64> collect_leaves(ParamRegistryT<double>& reg,
                                     std::initializer_list<Tensor64> inputs) {
  std::vector<Tensor64> leaves(inputs);
  for (auto& e : reg.entries()) leaves.push_back(e.tensor);
  return leaves;
}

}  // namespace

ModuleResult check_tensor_core(std::uint64_t seed) {
  Rng rng(seed * 11400714819323198485ULL + 1);
  ModuleResult res{"tensor-core", {}};

  {  // broadcast arithmetic + sigmoid
    auto a = rand_tensor({2, 3, 4}, rng, -1.0, 1.0);
    auto b = rand_tensor({2, 1, 4}, rng, -1.0, 1.0);
    auto f = [&] {
      return sum(mul(add(a, b), sigmoid(sub(a, mul(b, 0.5)))));
    };
    merge(res.stats, check_gradients(f, {a, b}, kStep, rng));
  }
  {  // division, reverse, prelu (mixed signs with margin, denominator away from 0)
    auto x = rand_signed_margin({3, 5}, rng);
    auto d = rand_tensor({3, 5}, rng, 1.5, 2.5);
    auto slope = Tensor64::from_vector({1}, {0.25}, true);
    auto f = [&] {
      return add(mean(div(prelu(x, slope), d)), mul(sum(reverse(sigmoid(x))), 0.1));
    };
    merge(res.stats, check_gradients(f, {x, d, slope}, kStep, rng));
  }
  {  // concat + channel reductions
    auto x1 = rand_tensor({1, 2, 3, 3}, rng, -1.0, 1.0);
    auto x2 = rand_tensor({1, 3, 3, 3}, rng, -1.0, 1.0);
    auto f = [&] {
      auto y = concat<double>({x1, x2}, 1);
      return sum(mul(channel_mean(y), channel_max(y)));
    };
    merge(res.stats, check_gradients(f, {x1, x2}, kStep, rng));
  }
  {  // binary cross-entropy away from the clamp boundary
    auto p = rand_tensor({2, 2}, rng, 0.1, 0.9);
    auto t = Tensor64::from_vector({2, 2}, {1.0, 0.0, 0.0, 1.0});
    auto f = [&] { return bce_mean(p, t); };
    merge(res.stats, check_gradients(f, {p}, kStep, rng));
  }
  return res;
}

ModuleResult check_nn_ops(std::uint64_t seed) {
  Rng rng(seed * 11400714819323198485ULL + 2);
  ModuleResult res{"nn-ops", {}};

  {  // conv2d: input, weight, and bias gradients
    auto x = rand_tensor({2, 3, 5, 5}, rng, -1.0, 1.0);
    auto w = rand_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
    auto b = rand_tensor({4}, rng, -0.2, 0.2);
    auto r = weighting_like(Tensor64::zeros({2, 4, 5, 5}), rng);
    auto f = [&] { return sum(mul(conv2d(x, w, b, 1, 1), r)); };
    merge(res.stats, check_gradients(f, {x, w, b}, kStep, rng));
  }
  {  // bilinear resample up and down
    auto x = rand_tensor({1, 2, 5, 7}, rng, -1.0, 1.0);
    auto r_up = weighting_like(Tensor64::zeros({1, 2, 8, 9}), rng);
    auto r_dn = weighting_like(Tensor64::zeros({1, 2, 3, 4}), rng);
    auto f = [&] {
      return add(sum(mul(resample(x, 8, 9), r_up)), sum(mul(resample(x, 3, 4), r_dn)));
    };
    merge(res.stats, check_gradients(f, {x}, kStep, rng));
  }
  {  // global average pooling
    auto x = rand_tensor({2, 3, 4, 4}, rng, -1.0, 1.0);
    auto r = weighting_like(Tensor64::zeros({2, 3, 1, 1}), rng);
    auto f = [&] { return sum(mul(global_avg_pool(x), r)); };
    merge(res.stats, check_gradients(f, {x}, kStep, rng));
  }
  {  // max pooling (continuous random values; near-ties are skipped)
    auto x = rand_tensor({1, 2, 6, 6}, rng, -1.0, 1.0);
    auto r = weighting_like(Tensor64::zeros({1, 2, 3, 3}), rng);
    auto f = [&] { return sum(mul(max_pool2x2(x), r)); };
    merge(res.stats, check_gradients(f, {x}, kStep, rng));
  }
  return res;
}

ModuleResult check_backbone(std::uint64_t seed) {
  Rng rng(seed * 11400714819323198485ULL + 3);
  ModuleResult res{"backbone", {}};

  BackboneConfig cfg;
  cfg.channels = {2, 2, 4, 4, 4};
  cfg.convs_per_block = {1, 1, 1, 1, 1};
  cfg.input_size = 16;
  ParamRegistryT<double> reg;
  Rng init_rng(seed + 77);
  BackboneT<double> bb(reg, "bb", cfg, 3, init_rng);
  make_params_positive(reg, rng);

  auto x = rand_tensor({1, 3, 16, 16}, rng, 0.2, 1.0);
  Rng wrng(seed + 5);
  auto r5 = rand_tensor({1, 4, 1, 1}, wrng, -1.0, 1.0, false);
  auto r3 = rand_tensor({1, 4, 4, 4}, wrng, -1.0, 1.0, false);
  auto f = [&] {
    auto pyr = bb.extract(x);
    return add(sum(mul(pyr.level(5), r5)), sum(mul(pyr.level(3), r3)));
  };
  merge(res.stats, check_gradients(f, collect_leaves(reg, {x}), kStep, rng, 24));
  return res;
}

ModuleResult check_cca(std::uint64_t seed) {
  Rng rng(seed * 11400714819323198485ULL + 4);
  ModuleResult res{"cca", {}};

  BackboneConfig cfg;
  cfg.channels = {2, 2, 4, 4, 4};
  cfg.convs_per_block = {1, 1, 1, 1, 1};
  cfg.input_size = 32;  // level 3 at 8x8
  ParamRegistryT<double> reg;
  Rng init_rng(seed + 177);
  CcaT<double> cca(reg, "cca", cfg, /*c_common=*/4, init_rng);
  make_params_positive(reg, rng);

  FeaturePyramidT<double> pyr;
  pyr.levels[2] = rand_tensor({1, 4, 8, 8}, rng, 0.2, 1.0);
  pyr.levels[3] = rand_tensor({1, 4, 4, 4}, rng, 0.2, 1.0);
  pyr.levels[4] = rand_tensor({1, 4, 2, 2}, rng, 0.2, 1.0);

  Rng wrng(seed + 6);
  auto r3 = rand_tensor({1, 4, 8, 8}, wrng, -1.0, 1.0, false);
  auto r4 = rand_tensor({1, 4, 4, 4}, wrng, -1.0, 1.0, false);
  auto r5 = rand_tensor({1, 4, 2, 2}, wrng, -1.0, 1.0, false);
  auto f = [&] {
    auto out = cca.run(pyr);
    return add(add(sum(mul(out.fhat3, r3)), sum(mul(out.fhat4, r4))),
               sum(mul(out.fhat5, r5)));
  };
  merge(res.stats,
        check_gradients(f, collect_leaves(reg, {pyr.levels[2], pyr.levels[3], pyr.levels[4]}),
                        kStep, rng, 10));
  return res;
}

ModuleResult check_afi(std::uint64_t seed) {
  Rng rng(seed * 11400714819323198485ULL + 5);
  ModuleResult res{"afi", {}};

  ParamRegistryT<double> reg;
  Rng init_rng(seed + 277);
  AfiLevelT<double> level(reg, "fuse", /*channels=*/4, /*guide_channels=*/4, init_rng);
  ResidualUnitT<double> residual(reg, "res", /*in_channels=*/8, /*c_fuse=*/4, init_rng);
  make_params_positive(reg, rng);

  auto fh = rand_tensor({1, 4, 4, 4}, rng, 0.2, 1.0);
  // Mixed-sign depth features exercise both prelu branches end to end.
  auto fd = rand_signed_margin({1, 4, 4, 4}, rng, 0.05);
  auto guide = rand_tensor({1, 4, 8, 8}, rng, 0.2, 1.0);

  Rng wrng(seed + 7);
  auto r = rand_tensor({1, 4, 2, 2}, wrng, -1.0, 1.0, false);
  auto f = [&] {
    auto parts = level.fuse(fh, fd, guide);
    return sum(mul(residual(parts.fused, 2, 2), r));
  };
  merge(res.stats, check_gradients(f, collect_leaves(reg, {fh, fd, guide}), kStep, rng, 10));
  return res;
}

ModuleResult check_model_trainer(std::uint64_t seed) {
  Rng rng(seed * 11400714819323198485ULL + 6);
  ModuleResult res{"model-trainer", {}};

  {  // loss gradient on small maps
    auto p = rand_tensor({1, 1, 2, 2}, rng, 0.15, 0.85);
    auto t = Tensor64::from_vector({1, 1, 2, 2}, {1.0, 0.0, 1.0, 1.0});
    auto f = [&] { return saliency_loss(p, t); };
    merge(res.stats, check_gradients(f, {p}, kStep, rng));
  }
  {  // full forward + loss, spot-checked across all parameter groups
    ModelConfig cfg;
    cfg.backbone.channels = {2, 2, 4, 4, 4};
    cfg.backbone.convs_per_block = {1, 1, 1, 1, 1};
    cfg.backbone.input_size = 16;
    cfg.c_common = 4;
    cfg.c_fuse = 4;
    ModelT<double> model(cfg, seed + 377);
    make_params_positive(model.params(), rng);

    auto rgb = rand_tensor({1, 3, 16, 16}, rng, 0.2, 1.0);
    auto depth = rand_tensor({1, 1, 16, 16}, rng, 0.2, 1.0);
    auto gt = Tensor64::zeros({1, 1, 16, 16});
    {
      auto g = gt.mutable_data();
      for (int y = 4; y < 12; ++y) {
        for (int x = 4; x < 12; ++x) g[y * 16 + x] = 1.0;
      }
    }
    auto f = [&] { return saliency_loss(model.forward(rgb, depth), gt); };
    merge(res.stats, check_gradients(f, collect_leaves(model.params(), {rgb, depth}),
                                     kStep, rng, 2));
  }
  return res;
}

std::vector<ModuleResult> run_all(std::uint64_t seed) {
  return {check_tensor_core(seed), check_nn_ops(seed),   check_backbone(seed),
          check_cca(seed),         check_afi(seed),      check_model_trainer(seed)};
}

}  // namespace caai::gradcheck
