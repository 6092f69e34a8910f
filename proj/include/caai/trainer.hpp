#pragma once

#include <functional>
#include <string>
#include <vector>

#include "caai/model.hpp"

namespace caai {

struct TrainConfig {
  ModelConfig model;
  int batch_size = 4;
  double lr = 1e-3;          // full-size runs pair 1e-10 with pretrained weights
  double momentum = 0.9;     // full-size: 0.99
  double weight_decay = 5e-4;
  int epochs = 300;          // full-size: 61
  std::uint64_t seed = 1;
  int precision = 32;        // parameter dtype: 32 or 64 bits

  void validate() const;
};

template <typename T>
struct SampleT {
  std::string stem;
  TensorT<T> rgb;    // 3 x S x S (single sample, no batch axis)
  TensorT<T> depth;  // depth_channels x S x S
  TensorT<T> gt;     // 1 x S x S, values in {0,1}
};

template <typename T>
using DatasetT = std::vector<SampleT<T>>;

/// Stacks per-sample CHW tensors into one NCHW batch.
template <typename T>
TensorT<T> stack_samples(const std::vector<const TensorT<T>*>& parts);

/// SGD-with-momentum training driver. Velocities persist across steps and
/// are part of the checkpoint state.
template <typename T>
class TrainerT {
 public:
  explicit TrainerT(const TrainConfig& cfg);

  ModelT<T>& model() { return model_; }
  const ModelT<T>& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }

  /// Clears grads, runs forward + loss + backward on one batch. Returns the
  /// loss value; throws with the offending op named if it is non-finite.
  double compute_grads(const TensorT<T>& rgb, const TensorT<T>& depth, const TensorT<T>& gt);

  /// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
  /// Requires grads on every parameter.
  void sgd_step();

  /// One pass over the dataset in seeded shuffle order; returns mean loss.
  double run_epoch(const DatasetT<T>& data);

  /// Runs up to cfg.epochs more epochs, logging per-epoch mean loss into the
  /// history. should_stop(epoch_index, mean_loss) can end training early.
  void train(const DatasetT<T>& data,
             const std::function<bool(int, double)>& should_stop = {},
             bool log_to_stdout = false);

  const std::vector<double>& loss_history() const { return loss_history_; }
  int epochs_done() const { return epochs_done_; }

  std::vector<std::vector<T>>& velocities() { return velocity_; }
  const std::vector<std::vector<T>>& velocities() const { return velocity_; }
  void set_epochs_done(int n) { epochs_done_ = n; }

 private:
  TrainConfig cfg_;
  ModelT<T> model_;
  std::vector<std::vector<T>> velocity_;  // one buffer per registry entry
  std::vector<double> loss_history_;
  int epochs_done_ = 0;
  std::int64_t steps_done_ = 0;
};

}  // namespace caai
