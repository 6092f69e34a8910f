#include "caai/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace caai {

namespace {
std::atomic<bool> g_finite_checks{
#ifdef NDEBUG
    false
#else
    true
#endif
};
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> wrap_impl(std::shared_ptr<detail::TensorImplT<T>> impl) {
  return TensorT<T>(std::move(impl));
}

template <typename T>
static TensorT<T> make_tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad) {
  for (int d : shape) CAAI_CHECK(d > 0, "non-positive dimension in shape " + shape_str(shape));
  CAAI_CHECK(shape_numel(shape) == static_cast<std::int64_t>(data.size()),
             "shape " + shape_str(shape) + " does not match buffer of " +
                 std::to_string(data.size()) + " elements");
  auto impl = std::make_shared<detail::TensorImplT<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->needs_grad = requires_grad;
  return wrap_impl(std::move(impl));
}

template <typename T>
TensorT<T> TensorT<T>::zeros(std::vector<int> shape, bool requires_grad) {
  std::vector<T> data(shape_numel(shape), T(0));
  return make_tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
TensorT<T> TensorT<T>::full(std::vector<int> shape, T value, bool requires_grad) {
  std::vector<T> data(shape_numel(shape), value);
  return make_tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
TensorT<T> TensorT<T>::from_vector(std::vector<int> shape, std::vector<T> values,
                                   bool requires_grad) {
  return make_tensor(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
TensorT<T> TensorT<T>::scalar(T value, bool requires_grad) {
  return make_tensor({1}, std::vector<T>{value}, requires_grad);
}

// ---------------------------------------------------------------------------
// tape machinery
// ---------------------------------------------------------------------------

template <typename T>
static std::shared_ptr<TapeT<T>>& current_tape_slot() {
  thread_local std::shared_ptr<TapeT<T>> slot;
  return slot;
}

template <typename T>
TapeT<T>* current_tape() {
  return current_tape_slot<T>().get();
}

template <typename T>
AutodiffScope<T>::AutodiffScope() : tape_(std::make_shared<TapeT<T>>()) {
  auto& slot = current_tape_slot<T>();
  prev_ = slot;
  slot = tape_;
}

template <typename T>
AutodiffScope<T>::~AutodiffScope() {
  current_tape_slot<T>() = prev_;
}

namespace detail {

template <typename T>
void check_finite(const char* op, const std::vector<T>& data) {
  for (const T v : data) {
    if (!std::isfinite(static_cast<double>(v))) {
      fail(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

template <typename T>
void finish_op_vec(const char* op, const TensorT<T>& out,
                   const std::vector<const TensorT<T>*>& inputs,
                   std::function<void()> backprop) {
  if (finite_checks_enabled()) check_finite(op, out.impl()->data);
  auto& slot = current_tape_slot<T>();
  if (!slot) return;
  bool needs = false;
  for (const auto* in : inputs) needs = needs || in->impl()->needs_grad;
  if (!needs) return;
  auto impl = out.impl();
  impl->needs_grad = true;
  impl->tape = slot;
  impl->tape_id = static_cast<int>(slot->nodes.size());
  slot->nodes.push_back({op, impl, std::move(backprop)});
}

template <typename T>
void finish_op(const char* op, const TensorT<T>& out,
               std::initializer_list<const TensorT<T>*> inputs,
               std::function<void()> backprop) {
  std::vector<const TensorT<T>*> v(inputs.begin(), inputs.end());
  finish_op_vec(op, out, v, std::move(backprop));
}

}  // namespace detail

template <typename T>
void backward(const TensorT<T>& loss) {
  CAAI_CHECK(loss.defined(), "backward: undefined loss tensor");
  if (loss.numel() != 1) {
    fail("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  auto impl = loss.impl();
  auto tape = impl->tape.lock();
  if (!tape || impl->tape_id < 0) {
    fail("backward: loss was not produced on a live tape");
  }
  if (tape->consumed) fail("backward: tape already consumed");
  impl->grad_buf()[0] = T(1);
  for (int i = impl->tape_id; i >= 0; --i) {
    auto& node = tape->nodes[i];
    if (node.out->grad) node.backprop();
  }
  tape->consumed = true;
  tape->nodes.clear();  // frees saved intermediates
}

// ---------------------------------------------------------------------------
// broadcasting
// ---------------------------------------------------------------------------

namespace {

template <typename T>
using Impl = detail::TensorImplT<T>;

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
  CAAI_CHECK(a.size() == b.size(),
             "broadcast requires equal rank, got " + shape_str(a) + " vs " + shape_str(b));
  std::vector<int> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      out[i] = a[i];
    } else if (a[i] == 1 || b[i] == 1) {
      out[i] = a[i] > b[i] ? a[i] : b[i];
    } else {
      fail("shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

// Row-major strides, with 0 on axes the input broadcasts along.
std::vector<std::int64_t> broadcast_strides(const std::vector<int>& in,
                                            const std::vector<int>& out) {
  std::vector<std::int64_t> s(in.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    s[i] = (in[i] == 1 && out[i] > 1) ? 0 : acc;
    acc *= in[i];
  }
  return s;
}

// Odometer walk over the output shape, tracking flat offsets into two
// broadcast inputs. fn(out_index, off_a, off_b) runs once per element in
// row-major order.
template <class F>
void for_each_broadcast(const std::vector<int>& oshape,
                        const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, F fn) {
  const int rank = static_cast<int>(oshape.size());
  const std::int64_t n = shape_numel(oshape);
  std::vector<int> coord(rank, 0);
  std::int64_t offa = 0, offb = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    fn(i, offa, offb);
    for (int d = rank - 1; d >= 0; --d) {
      ++coord[d];
      offa += sa[d];
      offb += sb[d];
      if (coord[d] < oshape[d]) break;
      offa -= sa[d] * oshape[d];
      offb -= sb[d] * oshape[d];
      coord[d] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul, Div };

template <typename T>
TensorT<T> binary_op(const char* name, BinOp kind, const TensorT<T>& a, const TensorT<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  auto oshape = broadcast_shape(as, bs);
  auto out = TensorT<T>::zeros(oshape);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.mutable_data().data();

  if (as == bs) {  // fast path, no broadcasting
    const std::int64_t n = out.numel();
    switch (kind) {
      case BinOp::Add: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
      case BinOp::Sub: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
      case BinOp::Mul: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
      case BinOp::Div: for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i]; break;
    }
  } else {
    const auto sa = broadcast_strides(as, oshape);
    const auto sb = broadcast_strides(bs, oshape);
    switch (kind) {
      case BinOp::Add:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] + pb[ib]; });
        break;
      case BinOp::Sub:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] - pb[ib]; });
        break;
      case BinOp::Mul:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] * pb[ib]; });
        break;
      case BinOp::Div:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] / pb[ib]; });
        break;
    }
  }

  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  detail::finish_op(name, out, {&a, &b}, [ai, bi, oi, oshape, kind] {
    const auto& g = *oi->grad;
    const auto sa = broadcast_strides(ai->shape, oshape);
    const auto sb = broadcast_strides(bi->shape, oshape);
    const bool need_a = ai->needs_grad;
    const bool need_b = bi->needs_grad;
    T* ga = need_a ? ai->grad_buf().data() : nullptr;
    T* gb = need_b ? bi->grad_buf().data() : nullptr;
    const T* pa = ai->data.data();
    const T* pb = bi->data.data();
    switch (kind) {
      case BinOp::Add:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] += g[i];
        });
        break;
      case BinOp::Sub:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] -= g[i];
        });
        break;
      case BinOp::Mul:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) ga[ia] += g[i] * pb[ib];
          if (gb) gb[ib] += g[i] * pa[ia];
        });
        break;
      case BinOp::Div:
        for_each_broadcast(oshape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
          if (ga) ga[ia] += g[i] / pb[ib];
          if (gb) gb[ib] -= g[i] * pa[ia] / (pb[ib] * pb[ib]);
        });
        break;
    }
  });
  return out;
}

}  // namespace

template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) { return binary_op("add", BinOp::Add, a, b); }
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) { return binary_op("sub", BinOp::Sub, a, b); }
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) { return binary_op("mul", BinOp::Mul, a, b); }
template <typename T> TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) { return binary_op("div", BinOp::Div, a, b); }

template <typename T>
TensorT<T> add(const TensorT<T>& a, T s) {
  auto out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + s;
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("add_scalar", out, {&a}, [ai, oi] {
    const auto& g = *oi->grad;
    auto& ga = ai->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, T s) {
  auto out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * s;
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("mul_scalar", out, {&a}, [ai, oi, s] {
    const auto& g = *oi->grad;
    auto& ga = ai->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
  return out;
}

template <typename T>
TensorT<T> reverse(const TensorT<T>& a) {
  auto out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = T(1) - pa[i];
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("reverse", out, {&a}, [ai, oi] {
    const auto& g = *oi->grad;
    auto& ga = ai->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  auto out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = T(1) / (T(1) + std::exp(-pa[i]));
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("sigmoid", out, {&a}, [ai, oi] {
    const auto& g = *oi->grad;
    const auto& y = oi->data;
    auto& ga = ai->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  auto out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("relu", out, {&a}, [ai, oi] {
    const auto& g = *oi->grad;
    const auto& x = ai->data;
    auto& ga = ai->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T(0)) ga[i] += g[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> prelu(const TensorT<T>& a, const TensorT<T>& slope) {
  CAAI_CHECK(slope.numel() == 1, "prelu slope must be a single learnable scalar");
  const T s = slope.data()[0];
  auto out = TensorT<T>::zeros(a.shape());
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] >= T(0) ? pa[i] : s * pa[i];
  auto ai = a.impl(), si = slope.impl(), oi = out.impl();
  detail::finish_op("prelu", out, {&a, &slope}, [ai, si, oi, s] {
    const auto& g = *oi->grad;
    const auto& x = ai->data;
    T* ga = ai->needs_grad ? ai->grad_buf().data() : nullptr;
    T slope_grad = T(0);
    for (size_t i = 0; i < g.size(); ++i) {
      if (x[i] >= T(0)) {
        if (ga) ga[i] += g[i];
      } else {
        if (ga) ga[i] += g[i] * s;
        slope_grad += g[i] * x[i];
      }
    }
    if (si->needs_grad) si->grad_buf()[0] += slope_grad;
  });
  return out;
}

// ---------------------------------------------------------------------------
// concat
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  CAAI_CHECK(!parts.empty(), "concat of zero tensors");
  if (parts.size() == 1) return parts[0];
  const auto& s0 = parts[0].shape();
  const int rank = static_cast<int>(s0.size());
  CAAI_CHECK(axis >= 0 && axis < rank, "concat axis out of range");
  int axis_total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    CAAI_CHECK(static_cast<int>(s.size()) == rank, "concat rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && s[d] != s0[d]) {
        fail("concat dimension mismatch on axis " + std::to_string(d) + ": " +
             shape_str(s0) + " vs " + shape_str(s));
      }
    }
    axis_total += s[axis];
  }
  auto oshape = s0;
  oshape[axis] = axis_total;
  auto out = TensorT<T>::zeros(oshape);

  // outer = product of dims before axis, inner = product after.
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (int d = axis + 1; d < rank; ++d) inner *= s0[d];

  T* po = out.mutable_data().data();
  const std::int64_t out_row = static_cast<std::int64_t>(axis_total) * inner;
  std::int64_t axis_off = 0;
  for (const auto& p : parts) {
    const T* pp = p.data().data();
    const std::int64_t part_row = static_cast<std::int64_t>(p.shape()[axis]) * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      std::memcpy(po + o * out_row + axis_off * inner, pp + o * part_row,
                  sizeof(T) * part_row);
    }
    axis_off += p.shape()[axis];
  }

  std::vector<std::shared_ptr<detail::TensorImplT<T>>> impls;
  impls.reserve(parts.size());
  for (const auto& p : parts) impls.push_back(p.impl());
  auto oi = out.impl();

  std::vector<const TensorT<T>*> in_ptrs;
  in_ptrs.reserve(parts.size());
  for (const auto& p : parts) in_ptrs.push_back(&p);
  detail::finish_op_vec("concat", out, in_ptrs,
                        [impls, oi, outer, inner, axis_total, axis] {
    const auto& g = *oi->grad;
    const std::int64_t out_row = static_cast<std::int64_t>(axis_total) * inner;
    std::int64_t axis_off = 0;
    for (auto& pi : impls) {
      const std::int64_t part_axis = pi->shape[axis];
      const std::int64_t part_row = part_axis * inner;
      if (pi->needs_grad) {
        T* gp = pi->grad_buf().data();
        for (std::int64_t o = 0; o < outer; ++o) {
          const T* gsrc = g.data() + o * out_row + axis_off * inner;
          T* gdst = gp + o * part_row;
          for (std::int64_t k = 0; k < part_row; ++k) gdst[k] += gsrc[k];
        }
      }
      axis_off += part_axis;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  T acc = T(0);
  for (const T v : a.data()) acc += v;
  auto out = TensorT<T>::scalar(acc);
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("sum", out, {&a}, [ai, oi] {
    const T g = (*oi->grad)[0];
    auto& ga = ai->grad_buf();
    for (auto& v : ga) v += g;
  });
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
  T acc = T(0);
  for (const T v : a.data()) acc += v;
  const T inv_n = T(1) / static_cast<T>(a.numel());
  auto out = TensorT<T>::scalar(acc * inv_n);
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("mean", out, {&a}, [ai, oi, inv_n] {
    const T g = (*oi->grad)[0] * inv_n;
    auto& ga = ai->grad_buf();
    for (auto& v : ga) v += g;
  });
  return out;
}

template <typename T>
TensorT<T> channel_mean(const TensorT<T>& a) {
  CAAI_CHECK(a.rank() == 4, "channel_mean expects NCHW, got " + shape_str(a.shape()));
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  auto out = TensorT<T>::zeros({n, 1, h, w});
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const T inv_c = T(1) / static_cast<T>(c);
  for (int b = 0; b < n; ++b) {
    const T* src = pa + b * c * hw;
    T* dst = po + b * hw;
    for (int ch = 0; ch < c; ++ch) {
      for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[ch * hw + i];
    }
    for (std::int64_t i = 0; i < hw; ++i) dst[i] *= inv_c;
  }
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("channel_mean", out, {&a}, [ai, oi, n, c, hw, inv_c] {
    const auto& g = *oi->grad;
    auto& ga = ai->grad_buf();
    for (int b = 0; b < n; ++b) {
      const T* gsrc = g.data() + b * hw;
      T* gdst = ga.data() + static_cast<std::int64_t>(b) * c * hw;
      for (int ch = 0; ch < c; ++ch) {
        for (std::int64_t i = 0; i < hw; ++i) gdst[ch * hw + i] += gsrc[i] * inv_c;
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> channel_max(const TensorT<T>& a) {
  CAAI_CHECK(a.rank() == 4, "channel_max expects NCHW, got " + shape_str(a.shape()));
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  auto out = TensorT<T>::zeros({n, 1, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  // argmax per position (first channel wins ties) for gradient routing
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * hw, 0);
  for (int b = 0; b < n; ++b) {
    const T* src = pa + b * c * hw;
    T* dst = po + b * hw;
    int* am = argmax->data() + b * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      T best = src[i];
      int bc = 0;
      for (int ch = 1; ch < c; ++ch) {
        const T v = src[ch * hw + i];
        if (v > best) {
          best = v;
          bc = ch;
        }
      }
      dst[i] = best;
      am[i] = bc;
    }
  }
  auto ai = a.impl(), oi = out.impl();
  detail::finish_op("channel_max", out, {&a}, [ai, oi, argmax, n, c, hw] {
    const auto& g = *oi->grad;
    auto& ga = ai->grad_buf();
    for (int b = 0; b < n; ++b) {
      const T* gsrc = g.data() + b * hw;
      const int* am = argmax->data() + b * hw;
      T* gdst = ga.data() + static_cast<std::int64_t>(b) * c * hw;
      for (std::int64_t i = 0; i < hw; ++i) gdst[am[i] * hw + i] += gsrc[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> bce_mean(const TensorT<T>& pred, const TensorT<T>& target, T eps) {
  CAAI_CHECK(pred.shape() == target.shape(),
             "bce: shape mismatch " + shape_str(pred.shape()) + " vs " +
                 shape_str(target.shape()));
  const std::int64_t n = pred.numel();
  const T* pp = pred.data().data();
  const T* pt = target.data().data();
  const T lo = eps, hi = T(1) - eps;
  T acc = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    T p = pp[i];
    p = p < lo ? lo : (p > hi ? hi : p);
    acc += -(pt[i] * std::log(p) + (T(1) - pt[i]) * std::log(T(1) - p));
  }
  auto out = TensorT<T>::scalar(acc / static_cast<T>(n));
  auto pi = pred.impl(), ti = target.impl(), oi = out.impl();
  detail::finish_op("bce", out, {&pred, &target}, [pi, ti, oi, n, lo, hi] {
    if (!pi->needs_grad) return;  // targets carry no gradient
    const T g = (*oi->grad)[0] / static_cast<T>(n);
    const T* pp = pi->data.data();
    const T* pt = ti->data.data();
    auto& gp = pi->grad_buf();
    for (std::int64_t i = 0; i < n; ++i) {
      const T p = pp[i];
      if (p < lo || p > hi) continue;  // clamped region, zero slope
      gp[i] += g * (p - pt[i]) / (p * (T(1) - p));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// explicit instantiation
// ---------------------------------------------------------------------------

#define CAAI_INSTANTIATE_TENSOR(T)                                              \
  template class TensorT<T>;                                                    \
  template class AutodiffScope<T>;                                              \
  template TensorT<T> wrap_impl<T>(std::shared_ptr<detail::TensorImplT<T>>);    \
  template TapeT<T>* current_tape<T>();                                         \
  template void backward<T>(const TensorT<T>&);                                 \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);             \
  template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);             \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);             \
  template TensorT<T> div<T>(const TensorT<T>&, const TensorT<T>&);             \
  template TensorT<T> add<T>(const TensorT<T>&, T);                             \
  template TensorT<T> mul<T>(const TensorT<T>&, T);                             \
  template TensorT<T> reverse<T>(const TensorT<T>&);                            \
  template TensorT<T> sigmoid<T>(const TensorT<T>&);                            \
  template TensorT<T> relu<T>(const TensorT<T>&);                               \
  template TensorT<T> prelu<T>(const TensorT<T>&, const TensorT<T>&);           \
  template TensorT<T> concat<T>(const std::vector<TensorT<T>>&, int);           \
  template TensorT<T> sum<T>(const TensorT<T>&);                                \
  template TensorT<T> mean<T>(const TensorT<T>&);                               \
  template TensorT<T> channel_mean<T>(const TensorT<T>&);                       \
  template TensorT<T> channel_max<T>(const TensorT<T>&);                        \
  template TensorT<T> bce_mean<T>(const TensorT<T>&, const TensorT<T>&, T);     \
  namespace detail {                                                            \
  template void check_finite<T>(const char*, const std::vector<T>&);            \
  template void finish_op<T>(const char*, const TensorT<T>&,                    \
                             std::initializer_list<const TensorT<T>*>,          \
                             std::function<void()>);                            \
  template void finish_op_vec<T>(const char*, const TensorT<T>&,                \
                                 const std::vector<const TensorT<T>*>&,         \
                                 std::function<void()>);                        \
  }

CAAI_INSTANTIATE_TENSOR(float)
CAAI_INSTANTIATE_TENSOR(double)

#undef CAAI_INSTANTIATE_TENSOR

}  // namespace caai
