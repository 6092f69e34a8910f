#pragma once

#include <string>
#include <vector>

#include "caai/rng.hpp"
#include "caai/tensor.hpp"

namespace caai {

// ---- core layer ops (all differentiable, NCHW) ----

/// 2-D cross-correlation plus bias. weight is [Cout, Cin, k, k] with
/// k in {1, 3, 5}; output spatial size is floor((in + 2*pad - k)/stride) + 1.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& weight, const TensorT<T>& bias,
                  int stride = 1, int padding = 0);

/// Bilinear resampling to (target_h, target_w), half-pixel centers
/// (align-corners=false). Serves as both the up- and down-sampling path.
template <typename T>
TensorT<T> resample(const TensorT<T>& x, int target_h, int target_w);

/// 2x2 max pooling with stride 2 (spatial dims must be even).
template <typename T>
TensorT<T> max_pool2x2(const TensorT<T>& x);

/// Per-channel spatial mean: NCHW -> NC11.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x);

// ---- parameter initialization ----

enum class InitScheme {
  kFanInUniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = Cin*k*k
  kZeros,
  kPReluSlope,  // constant 0.25
};

const char* init_scheme_name(InitScheme s);
InitScheme init_scheme_from_name(const std::string& name);

/// Deterministic given the Rng state. For kFanInUniform the shape must be a
/// 4-D conv weight.
template <typename T>
TensorT<T> init_params(const std::vector<int>& shape, InitScheme scheme, Rng& rng);

// ---- parameter registry ----

/// Named, ordered collection of learnable tensors. Registration order is the
/// canonical order for the optimizer state and the checkpoint layout.
template <typename T>
class ParamRegistryT {
 public:
  struct Entry {
    std::string name;
    TensorT<T> tensor;
    InitScheme scheme;
  };

  TensorT<T> add(const std::string& name, const std::vector<int>& shape, InitScheme scheme,
                 Rng& rng);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::int64_t total_params() const;
  const Entry* find(const std::string& name) const;
  void clear_grads();

 private:
  std::vector<Entry> entries_;
};

// ---- small layer bundles used throughout the network ----

template <typename T>
struct Conv2dT {
  TensorT<T> weight;
  TensorT<T> bias;
  int stride = 1;
  int padding = 0;

  Conv2dT() = default;
  Conv2dT(ParamRegistryT<T>& reg, const std::string& name, int cin, int cout, int k,
          int padding, Rng& rng, int stride = 1);

  TensorT<T> operator()(const TensorT<T>& x) const {
    return conv2d(x, weight, bias, stride, padding);
  }
};

template <typename T>
struct PReluT {
  TensorT<T> slope;

  PReluT() = default;
  PReluT(ParamRegistryT<T>& reg, const std::string& name, Rng& rng);

  TensorT<T> operator()(const TensorT<T>& x) const { return prelu(x, slope); }
};

}  // namespace caai
