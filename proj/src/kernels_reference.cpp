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

// Naive-loop kernels. Deliberately dumb: these define correct behavior, the
// optimized variants must agree with them.

#include "exray/kernels.hpp"
#include "kernels_detail.hpp"

namespace exray {
namespace kern {

using namespace kdetail;

Tensor conv2d_reference(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  const auto& p = l.conv();
  const Shape& s = in.shape();
  int64_t h = s[0], w = s[1], ic = s[2];
  const Shape& ws = l.weights->shape();
  int64_t oc = ws[0];
  int64_t oh = (h + p.pad_top + p.pad_bottom - p.kh) / p.stride_h + 1;
  int64_t ow = (w + p.pad_left + p.pad_right - p.kw) / p.stride_w + 1;
  Tensor out = Tensor::zeros(in.dtype(), {oh, ow, oc});

  if (in.dtype() == DType::F32) {
    auto x = in.f32();
    auto wt = l.weights->f32();
    const float* bias = l.bias ? l.bias->f32().data() : nullptr;
    auto dst = out.f32();
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox)
        for (int64_t o = 0; o < oc; ++o) {
          double acc = bias ? bias[o] : 0.0;
          for (int ky = 0; ky < p.kh; ++ky) {
            int64_t y = oy * p.stride_h - p.pad_top + ky;
            if (y < 0 || y >= h) continue;
            for (int kx = 0; kx < p.kw; ++kx) {
              int64_t x_ = ox * p.stride_w - p.pad_left + kx;
              if (x_ < 0 || x_ >= w) continue;
              for (int64_t ci = 0; ci < ic; ++ci)
                acc += static_cast<double>(x[(y * w + x_) * ic + ci]) *
                       wt[((o * p.kh + ky) * p.kw + kx) * ic + ci];
            }
          }
          dst[(oy * ow + ox) * oc + o] = static_cast<float>(act_apply_f(p.act, acc));
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
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox)
      for (int64_t o = 0; o < oc; ++o) {
        int64_t acc = 0;
        for (int ky = 0; ky < p.kh; ++ky) {
          int64_t y = oy * p.stride_h - p.pad_top + ky;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < p.kw; ++kx) {
            int64_t x_ = ox * p.stride_w - p.pad_left + kx;
            if (x_ < 0 || x_ >= w) continue;
            for (int64_t ci = 0; ci < ic; ++ci) {
              int64_t prod = static_cast<int64_t>(x[(y * w + x_) * ic + ci]) *
                             wt[((o * p.kh + ky) * p.kw + kx) * ic + ci];
              acc = ctx.narrow_acc ? sat16(acc + prod) : acc + prod;
            }
          }
        }
        int64_t b = bias ? bias[o] : 0;
        acc = ctx.narrow_acc ? sat16(acc + b) : settle_acc(acc + b, ctx);
        Requant rq{s_in * weight_scale(wq, o) / s_out, ctx.trunc_requant, lo, hi};
        dst[(oy * ow + ox) * oc + o] = rq(acc);
      }
  out.set_quant(*l.out_quant);
  return out;
}

Tensor depthwise_reference(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
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
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox)
        for (int64_t ch = 0; ch < c; ++ch) {
          double acc = bias ? bias[ch] : 0.0;
          for (int ky = 0; ky < p.kh; ++ky) {
            int64_t y = oy * p.stride_h - p.pad_top + ky;
            if (y < 0 || y >= h) continue;
            for (int kx = 0; kx < p.kw; ++kx) {
              int64_t x_ = ox * p.stride_w - p.pad_left + kx;
              if (x_ < 0 || x_ >= w) continue;
              acc += static_cast<double>(x[(y * w + x_) * c + ch]) *
                     wt[(ch * p.kh + ky) * p.kw + kx];
            }
          }
          dst[(oy * ow + ox) * c + ch] = static_cast<float>(act_apply_f(p.act, acc));
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
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox)
      for (int64_t ch = 0; ch < c; ++ch) {
        int64_t acc = 0;
        for (int ky = 0; ky < p.kh; ++ky) {
          int64_t y = oy * p.stride_h - p.pad_top + ky;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < p.kw; ++kx) {
            int64_t x_ = ox * p.stride_w - p.pad_left + kx;
            if (x_ < 0 || x_ >= w) continue;
            int64_t prod = static_cast<int64_t>(x[(y * w + x_) * c + ch]) *
                           wt[(ch * p.kh + ky) * p.kw + kx];
            acc = ctx.narrow_acc ? sat16(acc + prod) : acc + prod;
          }
        }
        int64_t b = bias ? bias[ch] : 0;
        acc = ctx.narrow_acc ? sat16(acc + b) : settle_acc(acc + b, ctx);
        Requant rq{s_in * weight_scale(wq, ch) / s_out, ctx.trunc_requant, lo, hi};
        dst[(oy * ow + ox) * c + ch] = rq(acc);
      }
  out.set_quant(*l.out_quant);
  return out;
}

Tensor fully_connected_reference(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
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
      double acc = bias ? bias[o] : 0.0;
      for (int64_t i = 0; i < n; ++i)
        acc += static_cast<double>(x[i]) * wt[o * n + i];
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
    int64_t acc = 0;
    for (int64_t i = 0; i < n; ++i) {
      int64_t prod = static_cast<int64_t>(x[i]) * wt[o * n + i];
      acc = ctx.narrow_acc ? sat16(acc + prod) : acc + prod;
    }
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
