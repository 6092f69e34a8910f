#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "caai/checkpoint.hpp"
#include "caai/gradcheck.hpp"
#include "caai/image_io.hpp"
#include "caai/parallel.hpp"
#include "caai/synthetic.hpp"

using namespace caai;

TEST_SUITE_BEGIN("model_trainer");

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.backbone.channels = {2, 2, 4, 4, 4};
  cfg.backbone.convs_per_block = {1, 1, 1, 1, 1};
  cfg.backbone.input_size = 16;
  cfg.c_common = 4;
  cfg.c_fuse = 4;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 5;
  return cfg;
}

template <typename T>
DatasetT<T> synthetic_dataset(int n, int size, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.canvas = size;
  DatasetT<T> data(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed + 101 * i);
    auto s = render_sample(spec, rng);
    data[i].stem = "mem_" + std::to_string(i);
    data[i].rgb = planes_to_tensor<T>(s.rgb, 3, size);
    data[i].depth = planes_to_tensor<T>(s.depth, 1, size);
    data[i].gt = planes_to_tensor<T>(s.gt, 1, size);
  }
  return data;
}

Tensor64 rand64(std::vector<int> shape, Rng& rng, double lo, double hi) {
  auto t = Tensor64::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("forward emits an input-sized single-channel map in (0,1)") {
  ModelT<double> model(tiny_model(), 7);
  Rng rng(1);
  auto rgb = rand64({2, 3, 16, 16}, rng, 0.0, 1.0);
  auto depth = rand64({2, 1, 16, 16}, rng, 0.0, 1.0);
  auto pred = model.forward(rgb, depth);
  CHECK(pred.shape() == std::vector<int>{2, 1, 16, 16});
  for (auto v : pred.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("forward is bit-deterministic, also across thread counts") {
  ModelT<double> model(tiny_model(), 7);
  Rng rng(2);
  auto rgb = rand64({1, 3, 16, 16}, rng, 0.0, 1.0);
  auto depth = rand64({1, 1, 16, 16}, rng, 0.0, 1.0);
  auto a = model.forward(rgb, depth);
  auto b = model.forward(rgb, depth);
  CHECK(std::memcmp(a.data().data(), b.data().data(), sizeof(double) * a.numel()) == 0);

  set_threads(1);
  auto single = model.forward(rgb, depth);
  set_threads(2);
  auto dual = model.forward(rgb, depth);
  set_threads(0);
  CHECK(std::memcmp(single.data().data(), dual.data().data(),
                    sizeof(double) * single.numel()) == 0);
}

TEST_CASE("the depth path is live: one perturbed depth pixel moves the output") {
  ModelT<double> model(tiny_model(), 7);
  Rng rng(3);
  auto rgb = rand64({1, 3, 16, 16}, rng, 0.0, 1.0);
  auto depth = rand64({1, 1, 16, 16}, rng, 0.1, 0.9);
  auto base = model.forward(rgb, depth);
  depth.mutable_data()[40] += 0.35;
  auto bumped = model.forward(rgb, depth);
  double delta = 0.0;
  for (std::int64_t i = 0; i < base.numel(); ++i) {
    delta += std::fabs(bumped.data()[i] - base.data()[i]);
  }
  CHECK(delta > 0.0);
}

TEST_CASE("loss values: uniform 0.5 gives ln 2; perfect prediction hits the clamp floor") {
  auto half = Tensor64::full({1, 1, 2, 2}, 0.5);
  auto gt_half = Tensor64::full({1, 1, 2, 2}, 0.5);  // soft values accepted
  CHECK(saliency_loss(half, gt_half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto gt = Tensor64::from_vector({1, 1, 2, 2}, {1, 0, 1, 0});
  CHECK(saliency_loss(gt, gt).item() <= -std::log(1.0 - 1e-7) + 1e-15);
  CHECK(saliency_loss(gt, gt).item() >= 0.0);

  CHECK_THROWS_AS((void)saliency_loss(half, Tensor64::zeros({1, 1, 4, 4})), Error);
}

TEST_CASE("loss gradient matches finite differences on 2x2 maps") {
  Rng rng(4);
  auto p = rand64({1, 1, 2, 2}, rng, 0.15, 0.85);
  p.set_requires_grad(true);
  auto t = Tensor64::from_vector({1, 1, 2, 2}, {1, 0, 0, 1});
  auto f = [&] { return saliency_loss(p, t); };
  auto stats = gradcheck::check_gradients(f, {p}, 1e-3, rng);
  CHECK(stats.max_rel_err < 1e-4);
}

TEST_CASE("sgd velocity recurrence matches a hand computation, and lr=0 freezes params") {
  // the update rule on a single scalar parameter
  double w = 0.8, v = 0.0;
  const double mom = 0.9, wd = 0.0005, lr = 0.1;
  const double g1 = 0.3, g2 = -0.2;

  double ev = mom * 0.0 + g1 + wd * 0.8;
  double ew = 0.8 - lr * ev;
  double ev2 = mom * ev + g2 + wd * ew;
  double ew2 = ew - lr * ev2;

  TrainConfig cfg = tiny_train();
  cfg.lr = lr;
  cfg.momentum = mom;
  cfg.weight_decay = wd;
  cfg.precision = 64;
  TrainerT<double> trainer(cfg);
  auto& entries = trainer.model().params().entries();

  // deposit controlled values and gradients into the first parameter entry
  auto param = entries[0].tensor;
  param.mutable_data()[0] = w;
  for (auto& e : entries) {
    auto& gb = e.tensor.impl()->grad_buf();
    std::fill(gb.begin(), gb.end(), 0.0);
  }
  param.impl()->grad_buf()[0] = g1;
  trainer.sgd_step();
  CHECK(param.data()[0] == doctest::Approx(ew).epsilon(1e-15));

  for (auto& e : entries) {
    auto& gb = e.tensor.impl()->grad_buf();
    std::fill(gb.begin(), gb.end(), 0.0);
  }
  param.impl()->grad_buf()[0] = g2;
  trainer.sgd_step();
  CHECK(param.data()[0] == doctest::Approx(ew2).epsilon(1e-14));
  CHECK(trainer.velocities()[0][0] == doctest::Approx(ev2).epsilon(1e-14));

  // one step with momentum=0, wd=0, lr=1 decreases the param by exactly g
  TrainConfig plain = tiny_train();
  plain.lr = 1.0;
  plain.momentum = 0.0;
  plain.weight_decay = 0.0;
  plain.precision = 64;
  TrainerT<double> t2(plain);
  auto p2 = t2.model().params().entries()[0].tensor;
  const double before = p2.data()[0];
  for (auto& e : t2.model().params().entries()) {
    auto& gb = e.tensor.impl()->grad_buf();
    std::fill(gb.begin(), gb.end(), 0.0);
  }
  p2.impl()->grad_buf()[0] = 0.125;
  t2.sgd_step();
  CHECK(p2.data()[0] == before - 0.125);

  // sgd_update with lr=0 leaves parameters untouched
  std::vector<double> wv{1.0, -2.0}, gv{0.5, 0.5}, vel{0.1, 0.2};
  for (size_t i = 0; i < wv.size(); ++i) {
    vel[i] = 0.9 * vel[i] + gv[i] + 0.0 * wv[i];
    wv[i] -= 0.0 * vel[i];  // lr = 0
  }
  CHECK(wv[0] == 1.0);
  CHECK(wv[1] == -2.0);
}

TEST_CASE("sgd_step demands gradients on every parameter") {
  TrainerT<double> trainer(tiny_train());
  CHECK_THROWS_AS(trainer.sgd_step(), Error);
}

TEST_CASE("training rejects an empty dataset") {
  TrainerT<float> trainer(tiny_train());
  DatasetT<float> empty;
  CHECK_THROWS_AS(trainer.run_epoch(empty), Error);
}

TEST_CASE("a non-finite loss aborts with the offending op named") {
  TrainConfig cfg = tiny_train();
  cfg.precision = 64;
  TrainerT<double> trainer(cfg);
  auto data = synthetic_dataset<double>(1, 16, 21);
  // poison one weight so the forward blows up
  trainer.model().params().entries()[0].tensor.mutable_data()[0] =
      std::numeric_limits<double>::quiet_NaN();
  try {
    trainer.compute_grads(
        stack_samples<double>({&data[0].rgb}), stack_samples<double>({&data[0].depth}),
        stack_samples<double>({&data[0].gt}));
    FAIL("expected an abort");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("training aborted") != std::string::npos);
    CHECK(msg.find("op '") != std::string::npos);  // diagnostic names the op
  }
}

TEST_CASE("every parameter registers a gradient after one batch") {
  TrainConfig cfg = tiny_train();
  cfg.precision = 64;
  TrainerT<double> trainer(cfg);
  auto data = synthetic_dataset<double>(2, 16, 31);
  trainer.compute_grads(stack_samples<double>({&data[0].rgb, &data[1].rgb}),
                        stack_samples<double>({&data[0].depth, &data[1].depth}),
                        stack_samples<double>({&data[0].gt, &data[1].gt}));
  for (const auto& e : trainer.model().params().entries()) {
    CHECK(e.tensor.has_grad());
  }
}

TEST_CASE("gradients flow to both streams on random inputs") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrainConfig cfg = tiny_train();
    cfg.seed = seed;
    cfg.precision = 64;
    TrainerT<double> trainer(cfg);
    Rng rng(seed * 13);
    auto rgb = rand64({1, 3, 16, 16}, rng, 0.0, 1.0);
    auto depth = rand64({1, 1, 16, 16}, rng, 0.0, 1.0);
    auto gt = Tensor64::zeros({1, 1, 16, 16});
    for (int i = 0; i < 256; i += 2) gt.mutable_data()[i] = 1.0;
    trainer.compute_grads(rgb, depth, gt);

    double rgb_norm = 0.0, depth_norm = 0.0;
    for (const auto& e : trainer.model().params().entries()) {
      if (!e.tensor.has_grad()) continue;
      double norm = 0.0;
      for (auto g : e.tensor.grad()) norm += std::fabs(g);
      if (e.name.rfind("rgb.backbone", 0) == 0) rgb_norm += norm;
      if (e.name.rfind("depth.backbone", 0) == 0) depth_norm += norm;
    }
    CHECK(rgb_norm > 0.0);
    CHECK(depth_norm > 0.0);
  }
}

TEST_CASE("parameter count equals the analytic formula for several configs") {
  {
    ModelConfig cfg = tiny_model();
    ModelT<double> model(cfg, 1);
    CHECK(model.params().total_params() == analytic_param_count(cfg));
  }
  {
    ModelConfig cfg;  // desk defaults
    ModelT<float> model(cfg, 1);
    CHECK(model.params().total_params() == analytic_param_count(cfg));
  }
  {
    ModelConfig cfg;
    cfg.backbone.channels = {4, 8, 16, 16, 16};
    cfg.backbone.convs_per_block = {2, 2, 3, 3, 3};
    cfg.backbone.input_size = 32;
    cfg.c_common = 8;
    cfg.c_fuse = 12;
    cfg.depth_channels = 3;
    ModelT<float> model(cfg, 1);
    CHECK(model.params().total_params() == analytic_param_count(cfg));
  }
}

TEST_CASE("fixed seed reproduces the loss history bit for bit") {
  auto data = synthetic_dataset<float>(4, 16, 41);
  TrainConfig cfg = tiny_train();
  cfg.epochs = 3;
  TrainerT<float> a(cfg), b(cfg);
  a.train(data);
  b.train(data);
  REQUIRE(a.loss_history().size() == b.loss_history().size());
  for (size_t i = 0; i < a.loss_history().size(); ++i) {
    CHECK(a.loss_history()[i] == b.loss_history()[i]);
  }
  CHECK(std::isfinite(a.loss_history().back()));
}

TEST_CASE("checkpoint round-trip preserves outputs, velocities, and the epoch counter") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "caai_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.caai").string();

  auto data = synthetic_dataset<float>(2, 16, 51);
  TrainConfig cfg = tiny_train();
  cfg.epochs = 1;
  TrainerT<float> trainer(cfg);
  trainer.train(data);
  save_checkpoint(path, trainer);

  const auto info = peek_checkpoint(path);
  CHECK(info.precision == 32);
  CHECK(info.epochs_done == 1);
  CHECK(info.config.model.backbone.input_size == 16);

  auto loaded = load_checkpoint<float>(path);
  CHECK(loaded->epochs_done() == 1);
  auto x = data[0];
  auto pred_a = trainer.model().forward(stack_samples<float>({&x.rgb}),
                                        stack_samples<float>({&x.depth}));
  auto pred_b = loaded->model().forward(stack_samples<float>({&x.rgb}),
                                        stack_samples<float>({&x.depth}));
  CHECK(std::memcmp(pred_a.data().data(), pred_b.data().data(),
                    sizeof(float) * pred_a.numel()) == 0);
  for (size_t i = 0; i < trainer.velocities().size(); ++i) {
    CHECK(trainer.velocities()[i] == loaded->velocities()[i]);
  }
  CHECK_THROWS_AS((void)load_checkpoint<double>(path), Error);  // dtype mismatch
  fs::remove_all(dir);
}

TEST_CASE("resumed training continues the exact loss trajectory") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "caai_resume_test";
  fs::create_directories(dir);
  const std::string path = (dir / "mid.caai").string();

  auto data = synthetic_dataset<float>(4, 16, 61);
  TrainConfig cfg = tiny_train();
  cfg.epochs = 2;
  TrainerT<float> whole(cfg);
  whole.train(data);

  TrainConfig first = cfg;
  first.epochs = 1;
  TrainerT<float> part(first);
  part.train(data);
  save_checkpoint(path, part);
  auto resumed = load_checkpoint<float>(path);
  resumed->train(data);  // config stores epochs=1, so one more epoch

  CHECK(resumed->epochs_done() == 2);
  CHECK(whole.loss_history()[1] == resumed->loss_history()[0]);
  fs::remove_all(dir);
}

TEST_CASE("overfitting one synthetic sample drives the training loss under 0.05") {
  TrainConfig cfg;
  cfg.model.backbone.input_size = 32;  // desk channels, smaller canvas
  cfg.batch_size = 1;
  cfg.seed = 3;
  auto data = synthetic_dataset<float>(1, 32, 71);
  TrainerT<float> trainer(cfg);
  double loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    loss = trainer.compute_grads(stack_samples<float>({&data[0].rgb}),
                                 stack_samples<float>({&data[0].depth}),
                                 stack_samples<float>({&data[0].gt}));
    trainer.sgd_step();
  }
  CHECK(loss < 0.05);
}

TEST_CASE("model-trainer gradient suite passes") {
  auto res = gradcheck::check_model_trainer(17);
  CHECK(res.passed());
}

TEST_SUITE_END();
