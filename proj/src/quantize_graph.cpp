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

#include "exray/quantize_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "exray/common.hpp"
#include "exray/quant.hpp"
#include "exray/runtime.hpp"

namespace exray {

namespace {

QuantParams act_params(double lo, double hi) {
  QuantParams qp;
  qp.scheme = QuantScheme::PerTensorSymmetric;
  double m = std::max(std::abs(lo), std::abs(hi));
  qp.scale = {m > 0.0 ? m / kSymmetricMax : 1.0};
  if (m == 0.0) qp.degenerate_channels = {0};
  qp.calib_min = {lo};
  qp.calib_max = {hi};
  return qp;
}

Tensor quantize_bias(const Tensor& bias_f, double s_in, const QuantParams& wq) {
  auto b = bias_f.f32();
  std::vector<int32_t> out(b.size());
  for (size_t i = 0; i < b.size(); ++i) {
    double s = s_in * (wq.per_channel() ? wq.scale[i] : wq.scale[0]);
    double q = round_half_away(b[i] / s);
    out[i] = static_cast<int32_t>(std::clamp<double>(q, INT32_MIN, INT32_MAX));
  }
  return Tensor::from_i32(bias_f.shape(), std::move(out));
}

}  // namespace

Graph quantize_graph(const Graph& float_graph, std::span<const Tensor> calib,
                     const QuantizeOptions& opts) {
  if (calib.empty()) throw Error("quantize_graph: empty calibration set");
  float_graph.validate();
  if (float_graph.input_dtype != DType::F32)
    throw Error("quantize_graph: graph input must be f32");
  for (const auto& l : float_graph.layers)
    if (l.type == LayerType::Quantize || l.type == LayerType::Dequantize)
      throw Error("quantize_graph: layer " + std::to_string(l.index) +
                  " is already a quantization boundary");

  // Profile activation ranges with the reference resolver.
  size_t n = float_graph.layers.size();
  double in_lo = std::numeric_limits<double>::infinity(), in_hi = -in_lo;
  std::vector<double> lo(n, std::numeric_limits<double>::infinity());
  std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
  KernelResolver ref{ResolverKind::Reference, {}};
  for (const auto& x : calib) {
    for (float v : x.f32()) {
      in_lo = std::min<double>(in_lo, v);
      in_hi = std::max<double>(in_hi, v);
    }
    InferResult r = infer(float_graph, x, ref, CaptureMode::PerLayer);
    for (size_t i = 0; i < n; ++i) {
      for (float v : r.layer_outputs[i].f32()) {
        lo[i] = std::min<double>(lo[i], v);
        hi[i] = std::max<double>(hi[i], v);
      }
    }
  }

  Graph q;
  q.name = float_graph.name + "-i8";
  q.input_shape = float_graph.input_shape;
  q.input_dtype = DType::F32;

  LayerSpec quant;
  quant.index = 0;
  quant.name = "quantize_input";
  quant.type = LayerType::Quantize;
  quant.out_quant = act_params(in_lo, in_hi);
  q.layers.push_back(std::move(quant));

  QuantParams prev_qp = *q.layers[0].out_quant;
  for (size_t i = 0; i < n; ++i) {
    LayerSpec l = float_graph.layers[i];
    l.index = static_cast<int>(i) + 1;
    if (l.type == LayerType::Add) {
      auto p = l.add();
      p.operand += 1;
      l.params = p;
    }
    if (l.weights) {
      bool conv_like = l.type == LayerType::Conv2D || l.type == LayerType::DepthwiseConv2D ||
                       l.type == LayerType::FullyConnected;
      Tensor wq = quantize_symmetric(*l.weights, opts.per_channel && conv_like,
                                     opts.per_channel && conv_like
                                         ? std::optional<int32_t>(0)
                                         : std::nullopt);
      if (l.bias) l.bias = quantize_bias(*l.bias, prev_qp.scale[0], *wq.quant());
      l.weights = std::move(wq);
    }
    // Pad copies bytes; fresh calibration there would silently rescale them.
    l.out_quant = l.type == LayerType::Pad ? prev_qp : act_params(lo[i], hi[i]);
    prev_qp = *l.out_quant;
    q.layers.push_back(std::move(l));
  }

  LayerSpec dequant;
  dequant.index = static_cast<int>(n) + 1;
  dequant.name = "dequantize_output";
  dequant.type = LayerType::Dequantize;
  q.layers.push_back(std::move(dequant));

  q.output_layer = static_cast<int>(q.layers.size()) - 1;
  q.validate();
  return q;
}

}  // namespace exray
