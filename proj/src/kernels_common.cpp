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

// Ops shared by both resolvers, plus the per-layer dispatch. The conv family
// lives in kernels_reference.cpp and kernels_optimized.cpp.

#include <cstring>

#include "exray/kernels.hpp"
#include "kernels_detail.hpp"

namespace exray {

using namespace kdetail;

const char* resolver_name(ResolverKind k) {
  return k == ResolverKind::Reference ? "reference" : "optimized";
}

ResolverKind resolver_from_name(const std::string& s) {
  if (s == "reference") return ResolverKind::Reference;
  if (s == "optimized") return ResolverKind::Optimized;
  throw Error("unknown resolver '" + s + "'");
}

namespace kern {

Tensor average_pool(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  const auto& p = l.pool();
  const Shape& s = in.shape();
  int64_t h = s[0], w = s[1], c = s[2];
  int64_t oh = (h + p.pad_top + p.pad_bottom - p.kh) / p.stride_h + 1;
  int64_t ow = (w + p.pad_left + p.pad_right - p.kw) / p.stride_w + 1;
  Tensor out = Tensor::zeros(in.dtype(), {oh, ow, c});

  if (in.dtype() == DType::F32) {
    auto src = in.f32();
    auto dst = out.f32();
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox)
        for (int64_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          int64_t count = 0;
          for (int ky = 0; ky < p.kh; ++ky) {
            int64_t y = oy * p.stride_h - p.pad_top + ky;
            if (y < 0 || y >= h) continue;
            for (int kx = 0; kx < p.kw; ++kx) {
              int64_t x = ox * p.stride_w - p.pad_left + kx;
              if (x < 0 || x >= w) continue;
              acc += src[(y * w + x) * c + ch];
              ++count;
            }
          }
          dst[(oy * ow + ox) * c + ch] = static_cast<float>(acc / static_cast<double>(count));
        }
    return out;
  }

  Requant rq{tensor_scale(in) / l.out_quant->scale[0], ctx.trunc_requant,
             -kSymmetricMax, kSymmetricMax};
  auto src = in.i8();
  auto dst = out.i8();
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox)
      for (int64_t ch = 0; ch < c; ++ch) {
        int64_t acc = 0;
        int64_t count = 0;
        for (int ky = 0; ky < p.kh; ++ky) {
          int64_t y = oy * p.stride_h - p.pad_top + ky;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < p.kw; ++kx) {
            int64_t x = ox * p.stride_w - p.pad_left + kx;
            if (x < 0 || x >= w) continue;
            int64_t v = src[(y * w + x) * c + ch];
            acc = ctx.narrow_acc ? sat16(acc + v) : acc + v;
            ++count;
          }
        }
        if (!ctx.narrow_acc) acc = settle_acc(acc, ctx);
        // Window divide and rescale round once, together.
        dst[(oy * ow + ox) * c + ch] =
            rq.from_scaled(static_cast<double>(acc) * rq.mult / static_cast<double>(count));
      }
  out.set_quant(*l.out_quant);
  return out;
}

Tensor mean(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  const Shape& s = in.shape();
  int64_t hw = s[0] * s[1], c = s[2];
  bool int8 = in.dtype() == DType::I8;
  Tensor out = Tensor::zeros(in.dtype(), {c});

  for (int64_t ch = 0; ch < c; ++ch) {
    if (int8) {
      auto src = in.i8();
      int64_t acc = 0;
      for (int64_t i = 0; i < hw; ++i) {
        int64_t v = src[i * c + ch];
        acc = ctx.narrow_acc ? sat16(acc + v) : acc + v;
      }
      if (!ctx.narrow_acc) acc = settle_acc(acc, ctx);
      Requant rq{tensor_scale(in) / l.out_quant->scale[0], ctx.trunc_requant,
                 -kSymmetricMax, kSymmetricMax};
      out.i8()[ch] = rq.from_scaled(static_cast<double>(acc) * rq.mult /
                                    static_cast<double>(hw));
    } else {
      auto src = in.f32();
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) acc += src[i * c + ch];
      out.f32()[ch] = static_cast<float>(acc / static_cast<double>(hw));
    }
  }
  if (int8) out.set_quant(*l.out_quant);
  return out;
}

Tensor pad(const LayerSpec& l, const Tensor& in) {
  const auto& p = l.pad();
  const Shape& s = in.shape();
  int64_t h = s[0], w = s[1], c = s[2];
  int64_t oh = h + p.top + p.bottom, ow = w + p.left + p.right;
  Tensor out = Tensor::zeros(in.dtype(), {oh, ow, c});
  size_t row_bytes = static_cast<size_t>(w) * c * dtype_size(in.dtype());
  size_t out_row = static_cast<size_t>(ow) * c * dtype_size(in.dtype());
  for (int64_t y = 0; y < h; ++y) {
    // Zero fill is real 0 for both f32 and symmetric i8 (zero point 0).
    std::memcpy(out.raw().data() + (y + p.top) * out_row +
                    static_cast<size_t>(p.left) * c * dtype_size(in.dtype()),
                in.raw().data() + y * row_bytes, row_bytes);
  }
  if (in.dtype() == DType::I8) out.set_quant(*l.out_quant);
  return out;
}

Tensor add(const LayerSpec& l, const Tensor& in, const Tensor& operand, const KernelCtx& ctx) {
  const auto& p = l.add();
  int64_t n = in.elems();
  Tensor out = Tensor::zeros(in.dtype(), in.shape());

  if (in.dtype() == DType::F32) {
    auto a = in.f32();
    auto b = operand.f32();
    auto dst = out.f32();
    for (int64_t i = 0; i < n; ++i)
      dst[i] = static_cast<float>(act_apply_f(p.act, static_cast<double>(a[i]) + b[i]));
    return out;
  }

  double s_out = l.out_quant->scale[0];
  double m1 = tensor_scale(in) / s_out;
  double m2 = tensor_scale(operand) / s_out;
  auto [lo, hi] = act_range_q(p.act, s_out);
  auto a = in.i8();
  auto b = operand.i8();
  auto dst = out.i8();
  for (int64_t i = 0; i < n; ++i) {
    // Rescale each operand to the output scale, then add saturating.
    auto rescale = [&](double real) {
      return ctx.trunc_requant ? static_cast<int64_t>(std::trunc(real)) : round_to_i64(real);
    };
    int64_t q = rescale(a[i] * m1) + rescale(b[i] * m2);
    dst[i] = static_cast<int8_t>(std::clamp<int64_t>(q, lo, hi));
  }
  out.set_quant(*l.out_quant);
  return out;
}

Tensor softmax(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  const Shape& s = in.shape();
  int64_t axis_n = s.back();
  int64_t rows = in.elems() / axis_n;
  bool int8 = in.dtype() == DType::I8;
  double s_in = int8 ? tensor_scale(in) : 1.0;

  Tensor out = Tensor::zeros(in.dtype(), s);
  // Softmax itself runs in float; only the write-back requantizes.
  Requant rq;
  if (int8) rq = {1.0 / l.out_quant->scale[0], ctx.trunc_requant, -kSymmetricMax, kSymmetricMax};
  std::vector<double> row(axis_n);
  for (int64_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < axis_n; ++i) {
      int64_t at = r * axis_n + i;
      row[i] = int8 ? in.i8()[at] * s_in : in.f32()[at];
      mx = std::max(mx, row[i]);
    }
    double denom = 0.0;
    for (int64_t i = 0; i < axis_n; ++i) {
      row[i] = std::exp(row[i] - mx);
      denom += row[i];
    }
    for (int64_t i = 0; i < axis_n; ++i) {
      int64_t at = r * axis_n + i;
      double p = row[i] / denom;
      if (int8)
        out.i8()[at] = rq.from_scaled(p * rq.mult);
      else
        out.f32()[at] = static_cast<float>(p);
    }
  }
  if (int8) out.set_quant(*l.out_quant);
  return out;
}

Tensor quantize_layer(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx) {
  double s_out = l.out_quant->scale[0];
  Requant rq{1.0 / s_out, ctx.trunc_requant, -kSymmetricMax, kSymmetricMax};
  Tensor out = Tensor::zeros(DType::I8, in.shape());
  auto src = in.f32();
  auto dst = out.i8();
  for (int64_t i = 0; i < in.elems(); ++i) {
    if (!std::isfinite(src[i]))
      throw Error("layer " + std::to_string(l.index) + ": non-finite input at element " +
                  std::to_string(i));
    dst[i] = rq.from_scaled(src[i] * rq.mult);
  }
  out.set_quant(*l.out_quant);
  return out;
}

Tensor dequantize_layer(const LayerSpec& l, const Tensor& in) {
  (void)l;
  double s_in = tensor_scale(in);
  Tensor out = Tensor::zeros(DType::F32, in.shape());
  auto src = in.i8();
  auto dst = out.f32();
  for (int64_t i = 0; i < in.elems(); ++i) dst[i] = static_cast<float>(src[i] * s_in);
  return out;
}

}  // namespace kern

Tensor run_layer(const LayerSpec& l, ResolverKind kind, const Tensor& in,
                 const Tensor* operand, const KernelCtx& ctx) {
  bool ref = kind == ResolverKind::Reference;
  switch (l.type) {
    case LayerType::Conv2D:
      return ref ? kern::conv2d_reference(l, in, ctx) : kern::conv2d_optimized(l, in, ctx);
    case LayerType::DepthwiseConv2D:
      return ref ? kern::depthwise_reference(l, in, ctx) : kern::depthwise_optimized(l, in, ctx);
    case LayerType::FullyConnected:
      return ref ? kern::fully_connected_reference(l, in, ctx)
                 : kern::fully_connected_optimized(l, in, ctx);
    case LayerType::AveragePool2D:
      return kern::average_pool(l, in, ctx);
    case LayerType::Mean:
      return kern::mean(l, in, ctx);
    case LayerType::Pad:
      return kern::pad(l, in);
    case LayerType::Add:
      if (!operand) throw Error("layer " + std::to_string(l.index) + ": add needs an operand");
      return kern::add(l, in, *operand, ctx);
    case LayerType::Softmax:
      return kern::softmax(l, in, ctx);
    case LayerType::Quantize:
      return kern::quantize_layer(l, in, ctx);
    case LayerType::Dequantize:
      return kern::dequantize_layer(l, in);
  }
  throw Error("bad layer type");
}

}  // namespace exray
