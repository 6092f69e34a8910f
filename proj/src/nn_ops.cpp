#include "caai/nn_ops.hpp"

#include <algorithm>
#include <cmath>

#include "caai/parallel.hpp"

namespace caai {

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& weight, const TensorT<T>& bias,
                  int stride, int padding) {
  CAAI_CHECK(x.rank() == 4, "conv2d input must be NCHW, got " + shape_str(x.shape()));
  CAAI_CHECK(weight.rank() == 4, "conv2d weight must be [Cout,Cin,k,k]");
  const int n = x.dim(0), cin = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  const int cout = weight.dim(0), wcin = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  CAAI_CHECK(kh == kw && (kh == 1 || kh == 3 || kh == 5),
             "conv2d kernel must be square with k in {1,3,5}, got " +
                 shape_str(weight.shape()));
  if (wcin != cin) {
    fail("conv2d channel mismatch: input has " + std::to_string(cin) +
         " channels, weight expects " + std::to_string(wcin));
  }
  CAAI_CHECK(bias.rank() == 1 && bias.dim(0) == cout, "conv2d bias must be [Cout]");
  CAAI_CHECK(stride >= 1 && padding >= 0, "conv2d stride/padding out of range");
  const int oh = (ih + 2 * padding - kh) / stride + 1;
  const int ow = (iw + 2 * padding - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) {
    fail("conv2d degenerate output size for input " + shape_str(x.shape()) +
         " with kernel " + std::to_string(kh) + ", stride " + std::to_string(stride) +
         ", padding " + std::to_string(padding));
  }

  auto out = TensorT<T>::zeros({n, cout, oh, ow});
  const T* px = x.data().data();
  const T* pw = weight.data().data();
  const T* pb = bias.data().data();
  T* po = out.mutable_data().data();

  const std::int64_t in_chw = static_cast<std::int64_t>(cin) * ih * iw;
  const std::int64_t out_chw = static_cast<std::int64_t>(cout) * oh * ow;
  const std::int64_t w_ckk = static_cast<std::int64_t>(cin) * kh * kw;

  // One task per (batch, output channel); each output element is produced by
  // a single fixed-order accumulation, so results are identical for any
  // thread count.
  parallel_for(0, static_cast<std::int64_t>(n) * cout, [&](std::int64_t task) {
    const int b = static_cast<int>(task / cout);
    const int co = static_cast<int>(task % cout);
    const T* xb = px + b * in_chw;
    T* ob = po + b * out_chw + static_cast<std::int64_t>(co) * oh * ow;
    const T* wc = pw + co * w_ckk;
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo) {
        const int iy0 = y * stride - padding;
        const int ix0 = xo * stride - padding;
        // clip the kernel window against the input bounds
        const int ky_lo = std::max(0, -iy0), ky_hi = std::min(kh, ih - iy0);
        const int kx_lo = std::max(0, -ix0), kx_hi = std::min(kw, iw - ix0);
        T acc = pb[co];
        for (int ci = 0; ci < cin; ++ci) {
          const T* xc = xb + static_cast<std::int64_t>(ci) * ih * iw;
          const T* wk = wc + static_cast<std::int64_t>(ci) * kh * kw;
          for (int ky = ky_lo; ky < ky_hi; ++ky) {
            const T* xrow = xc + static_cast<std::int64_t>(iy0 + ky) * iw + ix0;
            const T* wrow = wk + static_cast<std::int64_t>(ky) * kw;
            for (int kx = kx_lo; kx < kx_hi; ++kx) acc += xrow[kx] * wrow[kx];
          }
        }
        ob[y * ow + xo] = acc;
      }
    }
  });

  auto xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
  detail::finish_op("conv2d", out, {&x, &weight, &bias},
                    [xi, wi, bi, oi, n, cin, ih, iw, cout, kh, kw, oh, ow, stride,
                     padding, in_chw, out_chw, w_ckk] {
    const auto& g = *oi->grad;
    const T* px = xi->data.data();
    const T* pw = wi->data.data();

    if (bi->needs_grad) {
      auto& gb = bi->grad_buf();
      for (int co = 0; co < cout; ++co) {
        T acc = T(0);
        for (int b = 0; b < n; ++b) {
          const T* gb_ptr = g.data() + b * out_chw + static_cast<std::int64_t>(co) * oh * ow;
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) acc += gb_ptr[i];
        }
        gb[co] += acc;
      }
    }

    if (wi->needs_grad) {
      T* gw = wi->grad_buf().data();
      parallel_for(0, cout, [&](std::int64_t co) {
        T* gwc = gw + co * w_ckk;
        for (int b = 0; b < n; ++b) {
          const T* gob = g.data() + b * out_chw + co * oh * ow;
          const T* xb = px + b * in_chw;
          for (int y = 0; y < oh; ++y) {
            for (int xo = 0; xo < ow; ++xo) {
              const T gv = gob[y * ow + xo];
              if (gv == T(0)) continue;
              const int iy0 = y * stride - padding;
              const int ix0 = xo * stride - padding;
              const int ky_lo = std::max(0, -iy0), ky_hi = std::min(kh, ih - iy0);
              const int kx_lo = std::max(0, -ix0), kx_hi = std::min(kw, iw - ix0);
              for (int ci = 0; ci < cin; ++ci) {
                const T* xc = xb + static_cast<std::int64_t>(ci) * ih * iw;
                T* gwk = gwc + static_cast<std::int64_t>(ci) * kh * kw;
                for (int ky = ky_lo; ky < ky_hi; ++ky) {
                  const T* xrow = xc + static_cast<std::int64_t>(iy0 + ky) * iw + ix0;
                  T* gwrow = gwk + static_cast<std::int64_t>(ky) * kw;
                  for (int kx = kx_lo; kx < kx_hi; ++kx) gwrow[kx] += gv * xrow[kx];
                }
              }
            }
          }
        }
      });
    }

    if (xi->needs_grad) {
      T* gx = xi->grad_buf().data();
      parallel_for(0, n, [&](std::int64_t b) {
        T* gxb = gx + b * in_chw;
        const T* gob_all = g.data() + b * out_chw;
        for (int co = 0; co < cout; ++co) {
          const T* gob = gob_all + static_cast<std::int64_t>(co) * oh * ow;
          const T* wc = pw + static_cast<std::int64_t>(co) * w_ckk;
          for (int y = 0; y < oh; ++y) {
            for (int xo = 0; xo < ow; ++xo) {
              const T gv = gob[y * ow + xo];
              if (gv == T(0)) continue;
              const int iy0 = y * stride - padding;
              const int ix0 = xo * stride - padding;
              const int ky_lo = std::max(0, -iy0), ky_hi = std::min(kh, ih - iy0);
              const int kx_lo = std::max(0, -ix0), kx_hi = std::min(kw, iw - ix0);
              for (int ci = 0; ci < cin; ++ci) {
                T* gxc = gxb + static_cast<std::int64_t>(ci) * ih * iw;
                const T* wk = wc + static_cast<std::int64_t>(ci) * kh * kw;
                for (int ky = ky_lo; ky < ky_hi; ++ky) {
                  T* gxrow = gxc + static_cast<std::int64_t>(iy0 + ky) * iw + ix0;
                  const T* wrow = wk + static_cast<std::int64_t>(ky) * kw;
                  for (int kx = kx_lo; kx < kx_hi; ++kx) gxrow[kx] += gv * wrow[kx];
                }
              }
            }
          }
        }
      });
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// bilinear resample
// ---------------------------------------------------------------------------

namespace {

struct Lerp {
  int lo, hi;   // source indices
  double w_hi;  // weight of hi; lo gets (1 - w_hi)
};

// Half-pixel-center source coordinate for each target index, clamped to the
// valid range.
std::vector<Lerp> lerp_table(int in_size, int out_size) {
  std::vector<Lerp> t(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    const double max_src = in_size - 1;
    if (src > max_src) src = max_src;
    const int lo = static_cast<int>(src);
    const int hi = std::min(lo + 1, in_size - 1);
    t[i] = {lo, hi, src - lo};
  }
  return t;
}

}  // namespace

template <typename T>
TensorT<T> resample(const TensorT<T>& x, int target_h, int target_w) {
  CAAI_CHECK(x.rank() == 4, "resample input must be NCHW, got " + shape_str(x.shape()));
  if (target_h < 1 || target_w < 1) {
    fail("resample: non-positive target size " + std::to_string(target_h) + "x" +
         std::to_string(target_w));
  }
  const int n = x.dim(0), c = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  if (ih == target_h && iw == target_w) return x;  // identity

  const auto ty = lerp_table(ih, target_h);
  const auto tx = lerp_table(iw, target_w);
  auto out = TensorT<T>::zeros({n, c, target_h, target_w});
  const T* px = x.data().data();
  T* po = out.mutable_data().data();
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const std::int64_t in_hw = static_cast<std::int64_t>(ih) * iw;
  const std::int64_t out_hw = static_cast<std::int64_t>(target_h) * target_w;

  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = px + p * in_hw;
    T* dst = po + p * out_hw;
    for (int y = 0; y < target_h; ++y) {
      const Lerp& ly = ty[y];
      const T wy = static_cast<T>(ly.w_hi);
      const T* r0 = src + static_cast<std::int64_t>(ly.lo) * iw;
      const T* r1 = src + static_cast<std::int64_t>(ly.hi) * iw;
      for (int xo = 0; xo < target_w; ++xo) {
        const Lerp& lx = tx[xo];
        const T wx = static_cast<T>(lx.w_hi);
        const T top = r0[lx.lo] + wx * (r0[lx.hi] - r0[lx.lo]);
        const T bot = r1[lx.lo] + wx * (r1[lx.hi] - r1[lx.lo]);
        dst[y * target_w + xo] = top + wy * (bot - top);
      }
    }
  }

  auto xi = x.impl(), oi = out.impl();
  detail::finish_op("resample", out, {&x},
                    [xi, oi, ty, tx, planes, in_hw, out_hw, iw, target_h, target_w] {
    const auto& g = *oi->grad;
    T* gx = xi->grad_buf().data();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* gsrc = g.data() + p * out_hw;
      T* gdst = gx + p * in_hw;
      for (int y = 0; y < target_h; ++y) {
        const Lerp& ly = ty[y];
        const T wy1 = static_cast<T>(ly.w_hi), wy0 = T(1) - wy1;
        for (int xo = 0; xo < target_w; ++xo) {
          const Lerp& lx = tx[xo];
          const T wx1 = static_cast<T>(lx.w_hi), wx0 = T(1) - wx1;
          const T gv = gsrc[y * target_w + xo];
          gdst[static_cast<std::int64_t>(ly.lo) * iw + lx.lo] += gv * wy0 * wx0;
          gdst[static_cast<std::int64_t>(ly.lo) * iw + lx.hi] += gv * wy0 * wx1;
          gdst[static_cast<std::int64_t>(ly.hi) * iw + lx.lo] += gv * wy1 * wx0;
          gdst[static_cast<std::int64_t>(ly.hi) * iw + lx.hi] += gv * wy1 * wx1;
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> max_pool2x2(const TensorT<T>& x) {
  CAAI_CHECK(x.rank() == 4, "max_pool2x2 input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  CAAI_CHECK(ih % 2 == 0 && iw % 2 == 0,
             "max_pool2x2 requires even spatial dims, got " + shape_str(x.shape()));
  const int oh = ih / 2, ow = iw / 2;
  auto out = TensorT<T>::zeros({n, c, oh, ow});
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const T* px = x.data().data();
  T* po = out.mutable_data().data();
  auto argmax = std::make_shared<std::vector<std::int32_t>>(planes * oh * ow);
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = px + p * ih * iw;
    T* dst = po + p * oh * ow;
    std::int32_t* am = argmax->data() + p * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo) {
        const int iy = 2 * y, ix = 2 * xo;
        // fixed scan order; first max wins ties
        std::int32_t best_idx = iy * iw + ix;
        T best = src[best_idx];
        const std::int32_t cand[3] = {iy * iw + ix + 1, (iy + 1) * iw + ix,
                                      (iy + 1) * iw + ix + 1};
        for (std::int32_t idx : cand) {
          if (src[idx] > best) {
            best = src[idx];
            best_idx = idx;
          }
        }
        dst[y * ow + xo] = best;
        am[y * ow + xo] = best_idx;
      }
    }
  }
  auto xi = x.impl(), oi = out.impl();
  detail::finish_op("max_pool2x2", out, {&x}, [xi, oi, argmax, planes, oh, ow, ih, iw] {
    const auto& g = *oi->grad;
    T* gx = xi->grad_buf().data();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* gsrc = g.data() + p * oh * ow;
      const std::int32_t* am = argmax->data() + p * oh * ow;
      T* gdst = gx + p * ih * iw;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) {
        gdst[am[i]] += gsrc[i];
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  CAAI_CHECK(x.rank() == 4, "global_avg_pool input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  auto out = TensorT<T>::zeros({n, c, 1, 1});
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const std::int64_t hw = static_cast<std::int64_t>(ih) * iw;
  const T inv = T(1) / static_cast<T>(hw);
  const T* px = x.data().data();
  T* po = out.mutable_data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    T acc = T(0);
    const T* src = px + p * hw;
    for (std::int64_t i = 0; i < hw; ++i) acc += src[i];
    po[p] = acc * inv;
  }
  auto xi = x.impl(), oi = out.impl();
  detail::finish_op("global_avg_pool", out, {&x}, [xi, oi, planes, hw, inv] {
    const auto& g = *oi->grad;
    T* gx = xi->grad_buf().data();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T gv = g[p] * inv;
      T* gdst = gx + p * hw;
      for (std::int64_t i = 0; i < hw; ++i) gdst[i] += gv;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// initialization and the registry
// ---------------------------------------------------------------------------

const char* init_scheme_name(InitScheme s) {
  switch (s) {
    case InitScheme::kFanInUniform: return "fan_in_uniform";
    case InitScheme::kZeros: return "zeros";
    case InitScheme::kPReluSlope: return "prelu_slope";
  }
  return "unknown";
}

InitScheme init_scheme_from_name(const std::string& name) {
  if (name == "fan_in_uniform") return InitScheme::kFanInUniform;
  if (name == "zeros") return InitScheme::kZeros;
  if (name == "prelu_slope") return InitScheme::kPReluSlope;
  fail("unknown init scheme '" + name + "'");
}

template <typename T>
TensorT<T> init_params(const std::vector<int>& shape, InitScheme scheme, Rng& rng) {
  auto t = TensorT<T>::zeros(shape);
  switch (scheme) {
    case InitScheme::kZeros:
      break;
    case InitScheme::kPReluSlope:
      for (auto& v : t.mutable_data()) v = T(0.25);
      break;
    case InitScheme::kFanInUniform: {
      CAAI_CHECK(shape.size() == 4, "fan-in init expects a conv weight shape");
      const double fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];
      const double bound = 1.0 / std::sqrt(fan_in);
      for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
  }
  return t;
}

template <typename T>
TensorT<T> ParamRegistryT<T>::add(const std::string& name, const std::vector<int>& shape,
                                  InitScheme scheme, Rng& rng) {
  CAAI_CHECK(find(name) == nullptr, "duplicate parameter name '" + name + "'");
  auto t = init_params<T>(shape, scheme, rng);
  t.set_requires_grad(true);
  entries_.push_back({name, t, scheme});
  return t;
}

template <typename T>
std::int64_t ParamRegistryT<T>::total_params() const {
  std::int64_t total = 0;
  for (const auto& e : entries_) total += e.tensor.numel();
  return total;
}

template <typename T>
const typename ParamRegistryT<T>::Entry* ParamRegistryT<T>::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
void ParamRegistryT<T>::clear_grads() {
  for (auto& e : entries_) e.tensor.clear_grad();
}

template <typename T>
Conv2dT<T>::Conv2dT(ParamRegistryT<T>& reg, const std::string& name, int cin, int cout,
                    int k, int padding, Rng& rng, int stride)
    : stride(stride), padding(padding) {
  weight = reg.add(name + ".weight", {cout, cin, k, k}, InitScheme::kFanInUniform, rng);
  bias = reg.add(name + ".bias", {cout}, InitScheme::kZeros, rng);
}

template <typename T>
PReluT<T>::PReluT(ParamRegistryT<T>& reg, const std::string& name, Rng& rng) {
  slope = reg.add(name + ".slope", {1}, InitScheme::kPReluSlope, rng);
}

#define CAAI_INSTANTIATE_NN(T)                                                      \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&,               \
                                const TensorT<T>&, int, int);                       \
  template TensorT<T> resample<T>(const TensorT<T>&, int, int);                     \
  template TensorT<T> max_pool2x2<T>(const TensorT<T>&);                            \
  template TensorT<T> global_avg_pool<T>(const TensorT<T>&);                        \
  template TensorT<T> init_params<T>(const std::vector<int>&, InitScheme, Rng&);    \
  template class ParamRegistryT<T>;                                                 \
  template struct Conv2dT<T>;                                                       \
  template struct PReluT<T>;

CAAI_INSTANTIATE_NN(float)
CAAI_INSTANTIATE_NN(double)

#undef CAAI_INSTANTIATE_NN

}  // namespace caai
