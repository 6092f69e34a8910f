#include "caai/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace caai {

void TrainConfig::validate() const {
  model.validate();
  CAAI_CHECK(lr > 0, "lr must be positive");
  CAAI_CHECK(momentum >= 0 && momentum < 1, "momentum must be in [0,1)");
  CAAI_CHECK(weight_decay >= 0, "weight_decay must be non-negative");
  CAAI_CHECK(batch_size >= 1, "batch_size must be >= 1");
  CAAI_CHECK(epochs >= 1, "epochs must be >= 1");
  CAAI_CHECK(precision == 32 || precision == 64, "precision must be 32 or 64");
}

template <typename T>
TensorT<T> stack_samples(const std::vector<const TensorT<T>*>& parts) {
  CAAI_CHECK(!parts.empty(), "stack_samples: empty batch");
  const auto& s0 = parts[0]->shape();
  CAAI_CHECK(s0.size() == 3, "stack_samples expects CHW tensors");
  std::vector<int> oshape = {static_cast<int>(parts.size()), s0[0], s0[1], s0[2]};
  auto out = TensorT<T>::zeros(oshape);
  T* po = out.mutable_data().data();
  const std::int64_t chw = shape_numel(s0);
  for (size_t i = 0; i < parts.size(); ++i) {
    CAAI_CHECK(parts[i]->shape() == s0, "stack_samples: shape mismatch");
    const T* src = parts[i]->data().data();
    std::copy(src, src + chw, po + static_cast<std::int64_t>(i) * chw);
  }
  return out;
}

template <typename T>
TrainerT<T>::TrainerT(const TrainConfig& cfg) : cfg_(cfg), model_(cfg.model, cfg.seed) {
  cfg_.validate();
  for (const auto& e : model_.params().entries()) {
    velocity_.emplace_back(e.tensor.numel(), T(0));
  }
}

template <typename T>
double TrainerT<T>::compute_grads(const TensorT<T>& rgb, const TensorT<T>& depth,
                                  const TensorT<T>& gt) {
  model_.params().clear_grads();
  double loss_value;
  {
    AutodiffScope<T> scope;
    auto pred = model_.forward(rgb, depth);
    auto loss = saliency_loss(pred, gt);
    loss_value = static_cast<double>(loss.item());
    if (!std::isfinite(loss_value)) {
      // Re-run the forward with per-op finite checks to name the culprit.
      const bool was = finite_checks_enabled();
      set_finite_checks(true);
      std::string diagnostic = "loss is non-finite (no single op identified)";
      try {
        auto p2 = model_.forward(rgb, depth);
        (void)saliency_loss(p2, gt);
      } catch (const Error& e) {
        diagnostic = e.what();
      }
      set_finite_checks(was);
      fail("training aborted at step " + std::to_string(steps_done_) + ": " + diagnostic);
    }
    backward(loss);
  }
  return loss_value;
}

template <typename T>
void TrainerT<T>::sgd_step() {
  auto& entries = model_.params().entries();
  const T lr = static_cast<T>(cfg_.lr);
  const T mom = static_cast<T>(cfg_.momentum);
  const T wd = static_cast<T>(cfg_.weight_decay);
  for (size_t p = 0; p < entries.size(); ++p) {
    auto& tensor = entries[p].tensor;
    if (!tensor.has_grad()) {
      fail("sgd_step: parameter '" + entries[p].name + "' has no gradient");
    }
    auto g = tensor.grad();
    auto w = tensor.mutable_data();
    auto& v = velocity_[p];
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = mom * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
  ++steps_done_;
}

template <typename T>
double TrainerT<T>::run_epoch(const DatasetT<T>& data) {
  CAAI_CHECK(!data.empty(), "train: empty dataset");
  // Seeded per-epoch shuffle: deterministic order given (seed, epoch).
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(cfg_.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epochs_done_) + 1);
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }

  double loss_sum = 0.0;
  int batches = 0;
  for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const size_t end = std::min(order.size(), start + cfg_.batch_size);
    std::vector<const TensorT<T>*> rgbs, depths, gts;
    for (size_t i = start; i < end; ++i) {
      rgbs.push_back(&data[order[i]].rgb);
      depths.push_back(&data[order[i]].depth);
      gts.push_back(&data[order[i]].gt);
    }
    const double loss =
        compute_grads(stack_samples(rgbs), stack_samples(depths), stack_samples(gts));
    sgd_step();
    loss_sum += loss;
    ++batches;
  }
  return loss_sum / batches;
}

template <typename T>
void TrainerT<T>::train(const DatasetT<T>& data,
                        const std::function<bool(int, double)>& should_stop,
                        bool log_to_stdout) {
  for (int e = 0; e < cfg_.epochs; ++e) {
    const double mean_loss = run_epoch(data);
    loss_history_.push_back(mean_loss);
    ++epochs_done_;
    if (log_to_stdout) {
      std::printf("epoch %d  loss %.17g\n", epochs_done_, mean_loss);
      std::fflush(stdout);
    }
    if (should_stop && should_stop(epochs_done_, mean_loss)) break;
  }
}

#define CAAI_INSTANTIATE_TRAINER(T)                                          \
  template TensorT<T> stack_samples<T>(const std::vector<const TensorT<T>*>&); \
  template class TrainerT<T>;

CAAI_INSTANTIATE_TRAINER(float)
CAAI_INSTANTIATE_TRAINER(double)

#undef CAAI_INSTANTIATE_TRAINER

}  // namespace caai
