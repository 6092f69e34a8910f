#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "caai/common.hpp"

namespace caai {

template <typename T>
struct TapeT;

namespace detail {

template <typename T>
struct TensorImplT {
  std::vector<int> shape;
  std::vector<T> data;
  bool requires_grad = false;  // leaf marked for gradient accumulation
  bool needs_grad = false;     // requires_grad, or derived from such a leaf
  std::unique_ptr<std::vector<T>> grad;  // lazily allocated, same numel as data
  std::weak_ptr<TapeT<T>> tape;          // tape that produced this value
  int tape_id = -1;

  std::vector<T>& grad_buf() {
    if (!grad) grad = std::make_unique<std::vector<T>>(data.size(), T(0));
    return *grad;
  }
};

}  // namespace detail

/// Dense N-dimensional tensor of T (float or double) in row-major order.
/// A Tensor is a cheap shared handle; values are treated as immutable once
/// they enter an op, only grad buffers mutate afterwards. 4-D feature maps
/// follow NCHW ordering.
template <typename T>
class TensorT {
 public:
  using Scalar = T;
  using Impl = detail::TensorImplT<T>;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false);
  static TensorT full(std::vector<int> shape, T value, bool requires_grad = false);
  static TensorT from_vector(std::vector<int> shape, std::vector<T> values,
                             bool requires_grad = false);
  static TensorT scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[i]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const T> data() const { return impl_->data; }
  /// Mutable access for initialization, optimizer updates, and perturbation;
  /// never call on a tensor already consumed by a recorded op.
  std::span<T> mutable_data() { return impl_->data; }

  T item() const {
    CAAI_CHECK(numel() == 1, "item() on non-scalar tensor " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    impl_->needs_grad = impl_->needs_grad || rg;
  }
  bool has_grad() const { return impl_->grad != nullptr; }
  std::span<const T> grad() const {
    CAAI_CHECK(has_grad(), "tensor has no gradient buffer");
    return *impl_->grad;
  }
  void clear_grad() { impl_->grad.reset(); }

  std::shared_ptr<Impl> impl() const { return impl_; }

 private:
  explicit TensorT(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;

  template <typename U>
  friend TensorT<U> wrap_impl(std::shared_ptr<detail::TensorImplT<U>> impl);
};

template <typename T>
TensorT<T> wrap_impl(std::shared_ptr<detail::TensorImplT<T>> impl);

/// Recorded computation tape: one node per forward op, appended in execution
/// order. backward() replays the nodes once each, in reverse append order,
/// then frees them; a tape serves exactly one forward/backward pass.
template <typename T>
struct TapeT {
  struct Node {
    const char* op;
    std::shared_ptr<detail::TensorImplT<T>> out;
    std::function<void()> backprop;
  };
  std::vector<Node> nodes;
  bool consumed = false;
};

/// RAII guard that makes a fresh tape current for this thread. Ops record
/// themselves only while a scope is active and some input needs gradients;
/// forward evaluation outside any scope is pure computation.
template <typename T>
class AutodiffScope {
 public:
  AutodiffScope();
  ~AutodiffScope();
  AutodiffScope(const AutodiffScope&) = delete;
  AutodiffScope& operator=(const AutodiffScope&) = delete;

  TapeT<T>& tape() { return *tape_; }

 private:
  std::shared_ptr<TapeT<T>> tape_;
  std::shared_ptr<TapeT<T>> prev_;
};

template <typename T>
TapeT<T>* current_tape();

/// Propagates gradients from a scalar loss to every needs-grad leaf on the
/// loss's tape, then frees the tape nodes. Deterministic given an identical
/// tape. Throws if loss is not scalar or was not produced on a live tape.
template <typename T>
void backward(const TensorT<T>& loss);

// ---- elementwise ops (shapes equal, or broadcastable by singleton dims) ----

template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> add(const TensorT<T>& a, T s);
template <typename T> TensorT<T> mul(const TensorT<T>& a, T s);

template <typename T> TensorT<T> operator+(const TensorT<T>& a, const TensorT<T>& b) { return add(a, b); }
template <typename T> TensorT<T> operator-(const TensorT<T>& a, const TensorT<T>& b) { return sub(a, b); }
template <typename T> TensorT<T> operator*(const TensorT<T>& a, const TensorT<T>& b) { return mul(a, b); }
template <typename T> TensorT<T> operator/(const TensorT<T>& a, const TensorT<T>& b) { return div(a, b); }

/// Reverse operation: subtracts the input from an all-ones tensor (1 - x).
template <typename T> TensorT<T> reverse(const TensorT<T>& a);

// ---- activations ----

template <typename T> TensorT<T> sigmoid(const TensorT<T>& a);
template <typename T> TensorT<T> relu(const TensorT<T>& a);
/// PReLU with a single learnable slope tensor of shape [1].
template <typename T> TensorT<T> prelu(const TensorT<T>& a, const TensorT<T>& slope);

// ---- structural ops ----

/// Concatenates along `axis` (channel axis 1 by default). All parts must
/// agree on every other dimension. A single part is returned unchanged.
template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis = 1);

// ---- reductions ----

template <typename T> TensorT<T> sum(const TensorT<T>& a);
template <typename T> TensorT<T> mean(const TensorT<T>& a);
/// Per-position mean over the channel axis of an NCHW tensor -> N x 1 x H x W.
template <typename T> TensorT<T> channel_mean(const TensorT<T>& a);
/// Per-position max over the channel axis of an NCHW tensor -> N x 1 x H x W.
template <typename T> TensorT<T> channel_max(const TensorT<T>& a);

/// Mean binary cross-entropy with predictions clamped to [eps, 1-eps].
template <typename T>
TensorT<T> bce_mean(const TensorT<T>& pred, const TensorT<T>& target, T eps = T(1e-7));

// ---- helpers shared with nn ops ----

namespace detail {

template <typename T>
void check_finite(const char* op, const std::vector<T>& data);

/// Registers a tape node for `out` if recording is active and any listed
/// input needs gradients. Runs the finite check on the fresh output.
template <typename T>
void finish_op(const char* op, const TensorT<T>& out,
               std::initializer_list<const TensorT<T>*> inputs,
               std::function<void()> backprop);

template <typename T>
void finish_op_vec(const char* op, const TensorT<T>& out,
                   const std::vector<const TensorT<T>*>& inputs,
                   std::function<void()> backprop);

}  // namespace detail

using Tensor64 = TensorT<double>;
using Tensor32 = TensorT<float>;

}  // namespace caai
