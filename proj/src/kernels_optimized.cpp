// Copyright 2026 The exray Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Cache-aware kernels: conv lowers to im2col + a GEMM with 4-way split
// accumulators; depthwise keeps channels innermost to walk NHWC contiguously.
// Integer accumulation is exact (wide) in both resolvers, so the int8 results
// are bit-identical to the reference kernels unless a fault says otherwise.

#include <vector>

#include "exray/kernels.hpp"
#include "kernels_detail.hpp"

namespace exray {
namespace kern {

using namespace kdetail;

namespace {

// Patch matrix rows in (ky, kx, ci) order, matching the weight row layout.
// Out-of-image taps become 0, which is exact for zero-padded float and for
// symmetric int8.
template <typename T>
std::vector<T> im2col(std::span<const T> x, int64_t h, int64_t w, int64_t ic,
                      const ConvParams& p, int64_t oh, int64_t ow) {
  int64_t patch = static_cast<int64_t>(p.kh) * p.kw * ic;
  std::vector<T> cols(static_cast<size_t>(oh * ow * patch), T{});
  for (int64_t oy = 0; oy < oh; ++oy) {
    for (int64_t ox = 0; ox < ow; ++ox) {
      T* row = cols.data() + (oy * ow + ox) * patch;
      for (int ky = 0; ky < p.kh; ++ky) {
        int64_t y = oy * p.stride_h - p.pad_top + ky;
        if (y < 0 || y >= h) continue;
        int64_t x0 = ox * p.stride_w - p.pad_left;
        for (int kx = 0; kx < p.kw; ++kx) {
          int64_t x_ = x0 + kx;
          if (x_ < 0 || x_ >= w) continue;
          const T* src = &x[(y * w + x_) * ic];
          T* dst = row + (static_cast<int64_t>(ky) * p.kw + kx) * ic;
          for (int64_t ci = 0; ci < ic; ++ci) dst[ci] = src[ci];
        }
      }
    }
  }
  return cols;
}

int64_t dot_i8(const int8_t* a, const int8_t* b, int64_t k, const KernelCtx& ctx) {
  if (ctx.narrow_acc) {
    // The fault forces a defined per-add order; sequential matches the
    // reference tap order since both follow the im2col layout.
    int64_t acc = 0;
    for (int64_t i = 0; i < k; ++i)
      acc = sat16(acc + static_cast<int64_t>(a[i]) * b[i]);
    return acc;
  }
  int64_t a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  int64_t i = 0;
  for (; i + 4 <= k; i += 4) {
    a0 += static_cast<int64_t>(a[i]) * b[i];
    a1 += static_cast<int64_t>(a[i + 1]) * b[i + 1];
    a2 += static_cast<int64_t>(a[i + 2]) * b[i + 2];
    a3 += static_cast<int64_t>(a[i + 3]) * b[i + 3];
  }
  for (; i < k; ++i) a0 += static_cast<int64_t>(a[i]) * b[i];
  return a0 + a1 + a2 + a3;
}

double dot_f32(const float* a, const float* b, int64_t k) {
  double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  int64_t i = 0;
  for (; i + 4 <= k; i += 4) {
    a0 += static_cast<double>(a[i]) * b[i];
    a1 += static_cast<double>(a[i + 1]) * b[i + 1];
    a2 += static_cast<double>(a[i + 2]) * b[i + 2];
    a3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < k; ++i) a0 += static_cast<double>(a[i]) * b[i];
  return a0 + a1 + a2 + a3;
}

}  // namespace

Tensor conv2d_optimized(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  const auto& p = l.conv();
  const Shape& s = in.shape();
  int64_t h = s[0], w = s[1], ic = s[2];
  int64_t oc = l.weights->shape()[0];
  int64_t oh = (h + p.pad_top + p.pad_bottom - p.kh) / p.stride_h + 1;
  int64_t ow = (w + p.pad_left + p.pad_right - p.kw) / p.stride_w + 1;
  int64_t patch = static_cast<int64_t>(p.kh) * p.kw * ic;
  int64_t pixels = oh * ow;
  Tensor out = Tensor::zeros(in.dtype(), {oh, ow, oc});

  if (in.dtype() == DType::F32) {
    auto cols = im2col<float>(in.f32(), h, w, ic, p, oh, ow);
    auto wt = l.weights->f32();
    const float* bias = l.bias ? l.bias->f32().data() : nullptr;
    auto dst = out.f32();
    for (int64_t px = 0; px < pixels; ++px) {
      const float* row = cols.data() + px * patch;
      for (int64_t o = 0; o < oc; ++o) {
        double acc = dot_f32(row, wt.data() + o * patch, patch) + (bias ? bias[o] : 0.0);
        dst[px * oc + o] = static_cast<float>(act_apply_f(p.act, acc));
      }
    }
    return out;
  }

  auto cols = im2col<int8_t>(in.i8(), h, w, ic, p, oh, ow);
  double s_in = tensor_scale(in);
  double s_out = l.out_quant->scale[0];
  const QuantParams& wq = *l.weights->quant();
  auto [lo, hi] = act_range_q(p.act, s_out);
  auto wt = l.weights->i8();
  const int32_t* bias = l.bias ? l.bias->i32().data() : nullptr;
  auto dst = out.i8();
  std::vector<Requant> rq(oc);
  for (int64_t o = 0; o < oc; ++o)
    rq[o] = {s_in * weight_scale(wq, o) / s_out, ctx.trunc_requant, lo, hi};
  for (int64_t px = 0; px < pixels; ++px) {
    const int8_t* row = cols.data() + px * patch;
    for (int64_t o = 0; o < oc; ++o) {
      int64_t acc = dot_i8(row, wt.data() + o * patch, patch, ctx);
      int64_t b = bias ? bias[o] : 0;
      acc = ctx.narrow_acc ? sat16(acc + b) : settle_acc(acc + b, ctx);
      dst[px * oc + o] = rq[o](acc);
    }
  }
  out.set_quant(*l.out_quant);
  return out;
}

Tensor depthwise_optimized(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  const auto& p = l.conv();
  const Shape& s = in.shape();
  int64_t h = s[0], w = s[1], c = s[2];
  int64_t oh = (h + p.pad_top + p.pad_bottom - p.kh) / p.stride_h + 1;
  int64_t ow = (w + p.pad_left + p.pad_right - p.kw) / p.stride_w + 1;
  Tensor out = Tensor::zeros(in.dtype(), {oh, ow, c});

  if (in.dtype() == DType::F32) {
    auto x = in.f32();
    auto wt = l.weights->f32();
    const float* bias = l.bias ? l.bias->f32().data() : nullptr;
    auto dst = out.f32();
    std::vector<double> acc(c);
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        for (int64_t ch = 0; ch < c; ++ch) acc[ch] = bias ? bias[ch] : 0.0;
        for (int ky = 0; ky < p.kh; ++ky) {
          int64_t y = oy * p.stride_h - p.pad_top + ky;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < p.kw; ++kx) {
            int64_t x_ = ox * p.stride_w - p.pad_left + kx;
            if (x_ < 0 || x_ >= w) continue;
            const float* src = &x[(y * w + x_) * c];
            for (int64_t ch = 0; ch < c; ++ch)
              acc[ch] += static_cast<double>(src[ch]) * wt[(ch * p.kh + ky) * p.kw + kx];
          }
        }
        float* d = &dst[(oy * ow + ox) * c];
        for (int64_t ch = 0; ch < c; ++ch)
          d[ch] = static_cast<float>(act_apply_f(p.act, acc[ch]));
      }
    return out;
  }

  double s_in = tensor_scale(in);
  double s_out = l.out_quant->scale[0];
  const QuantParams& wq = *l.weights->quant();
  auto [lo, hi] = act_range_q(p.act, s_out);
  auto x = in.i8();
  auto wt = l.weights->i8();
  const int32_t* bias = l.bias ? l.bias->i32().data() : nullptr;
  auto dst = out.i8();
  std::vector<Requant> rq(c);
  for (int64_t ch = 0; ch < c; ++ch)
    rq[ch] = {s_in * weight_scale(wq, ch) / s_out, ctx.trunc_requant, lo, hi};
  std::vector<int64_t> acc(c);
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox) {
      std::fill(acc.begin(), acc.end(), 0);
      // Taps outer, channels inner: per channel the tap order still matches
      // the reference kernel, so even the narrow fault stays deterministic
      // and resolver-agnostic here.
      for (int ky = 0; ky < p.kh; ++ky) {
        int64_t y = oy * p.stride_h - p.pad_top + ky;
        if (y < 0 || y >= h) continue;
        for (int kx = 0; kx < p.kw; ++kx) {
          int64_t x_ = ox * p.stride_w - p.pad_left + kx;
          if (x_ < 0 || x_ >= w) continue;
          const int8_t* src = &x[(y * w + x_) * c];
          for (int64_t ch = 0; ch < c; ++ch) {
            int64_t prod = static_cast<int64_t>(src[ch]) * wt[(ch * p.kh + ky) * p.kw + kx];
            acc[ch] = ctx.narrow_acc ? sat16(acc[ch] + prod) : acc[ch] + prod;
          }
        }
      }
      int8_t* d = &dst[(oy * ow + ox) * c];
      for (int64_t ch = 0; ch < c; ++ch) {
        int64_t b = bias ? bias[ch] : 0;
        int64_t a = ctx.narrow_acc ? sat16(acc[ch] + b) : settle_acc(acc[ch] + b, ctx);
        d[ch] = rq[ch](a);
      }
    }
  out.set_quant(*l.out_quant);
  return out;
}

Tensor fully_connected_optimized(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  const auto& p = l.fc();
  const Shape& ws = l.weights->shape();
  int64_t on = ws[0], n = ws[1];
  Tensor out = Tensor::zeros(in.dtype(), {on});

  if (in.dtype() == DType::F32) {
    auto x = in.f32();
    auto wt = l.weights->f32();
    const float* bias = l.bias ? l.bias->f32().data() : nullptr;
    auto dst = out.f32();
    for (int64_t o = 0; o < on; ++o) {
      double acc = dot_f32(x.data(), wt.data() + o * n, n) + (bias ? bias[o] : 0.0);
      dst[o] = static_cast<float>(act_apply_f(p.act, acc));
    }
    return out;
  }

  double s_in = tensor_scale(in);
  double s_out = l.out_quant->scale[0];
  const QuantParams& wq = *l.weights->quant();
  auto [lo, hi] = act_range_q(p.act, s_out);
  auto x = in.i8();
  auto wt = l.weights->i8();
  const int32_t* bias = l.bias ? l.bias->i32().data() : nullptr;
  auto dst = out.i8();
  for (int64_t o = 0; o < on; ++o) {
    int64_t acc = dot_i8(x.data(), wt.data() + o * n, n, ctx);
    int64_t b = bias ? bias[o] : 0;
    acc = ctx.narrow_acc ? sat16(acc + b) : settle_acc(acc + b, ctx);
    Requant rq{s_in * weight_scale(wq, o) / s_out, ctx.trunc_requant, lo, hi};
    dst[o] = rq(acc);
  }
  out.set_quant(*l.out_quant);
  return out;
}

}  // namespace kern
}  // namespace exray
