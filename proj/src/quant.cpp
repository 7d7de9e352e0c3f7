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

#include "exray/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace exray {

namespace {

// Flat-index -> channel mapping for a per-channel walk, or a constant 0
// channel for per-tensor.
struct ChannelMap {
  int64_t stride = 1;
  int64_t extent = 1;
  bool per_channel = false;
  int64_t channel(int64_t flat) const {
    return per_channel ? channel_of(flat, stride, extent) : 0;
  }
};

ChannelMap make_channel_map(const Tensor& t, bool per_channel,
                            std::optional<int32_t> channel_axis) {
  ChannelMap m;
  if (!per_channel) return m;
  if (!channel_axis)
    throw Error("per-channel quantization requires a channel_axis");
  int32_t ax = *channel_axis;
  if (ax < 0 || ax >= t.rank())
    throw Error("channel_axis " + std::to_string(ax) + " out of range for shape " +
                shape_str(t.shape()));
  m.per_channel = true;
  m.stride = strides_of(t.shape())[ax];
  m.extent = t.shape()[ax];
  return m;
}

}  // namespace

CalibRange calibrate(std::span<const Tensor> samples, bool per_channel,
                     std::optional<int32_t> channel_axis) {
  if (samples.empty()) throw Error("calibrate: empty sample set");
  ChannelMap map = make_channel_map(samples[0], per_channel, channel_axis);
  size_t channels = static_cast<size_t>(map.per_channel ? map.extent : 1);
  CalibRange r;
  r.min.assign(channels, std::numeric_limits<double>::infinity());
  r.max.assign(channels, -std::numeric_limits<double>::infinity());
  for (const Tensor& s : samples) {
    ChannelMap sm = make_channel_map(s, per_channel, channel_axis);
    if (sm.extent != map.extent)
      throw Error("calibrate: channel extent differs across samples");
    auto v = s.f32();
    for (int64_t i = 0; i < s.elems(); ++i) {
      if (!std::isfinite(v[i]))
        throw Error("calibrate: non-finite value at element " + std::to_string(i));
      int64_t c = sm.channel(i);
      r.min[c] = std::min(r.min[c], static_cast<double>(v[i]));
      r.max[c] = std::max(r.max[c], static_cast<double>(v[i]));
    }
  }
  for (size_t c = 0; c < channels; ++c) {
    if (!std::isfinite(r.min[c])) {  // channel slice was empty
      r.min[c] = 0.0;
      r.max[c] = 0.0;
    }
  }
  return r;
}

Tensor quantize_affine(const Tensor& x, double calib_min, double calib_max) {
  if (!(calib_min < calib_max))
    throw Error("quantize_affine: calibration requires calib_min < calib_max, got [" +
                std::to_string(calib_min) + ", " + std::to_string(calib_max) + "]");
  auto v = x.f32();
  std::vector<uint8_t> out(v.size());
  double span = calib_max - calib_min;
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]))
      throw Error("quantize_affine: non-finite input at element " + std::to_string(i));
    double q = round_half_away((v[i] - calib_min) / span * 255.0);
    out[i] = static_cast<uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  QuantParams qp;
  qp.scheme = QuantScheme::PerTensorAffine;
  qp.scale = {span / 255.0};
  qp.zero_point = static_cast<int32_t>(
      std::clamp(round_half_away(-calib_min / (span / 255.0)), 0.0, 255.0));
  qp.calib_min = {calib_min};
  qp.calib_max = {calib_max};
  return Tensor::from_u8(x.shape(), std::move(out), std::move(qp));
}

Tensor dequantize_affine(const Tensor& q) {
  if (!q.quant()) throw Error("dequantize_affine: tensor has no quant params");
  const QuantParams& qp = *q.quant();
  if (qp.scheme != QuantScheme::PerTensorAffine)
    throw Error("dequantize_affine: expected per_tensor_affine params");
  auto v = q.u8();
  std::vector<float> out(v.size());
  double lo = qp.calib_min[0], span = qp.calib_max[0] - qp.calib_min[0];
  for (size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<float>(v[i] / 255.0 * span + lo);
  return Tensor::from_f32(q.shape(), std::move(out));
}

double symmetric_scale(double calib_min, double calib_max) {
  double m = std::max(std::fabs(calib_min), std::fabs(calib_max));
  return m > 0 ? m / kSymmetricMax : 1.0;
}

Tensor quantize_symmetric(const Tensor& x, bool per_channel,
                          std::optional<int32_t> channel_axis) {
  if (x.elems() == 0) throw Error("quantize_symmetric: empty tensor");
  const Tensor samples[] = {x};
  CalibRange range = calibrate(samples, per_channel, channel_axis);
  return quantize_symmetric(x, range, per_channel, channel_axis);
}

Tensor quantize_symmetric(const Tensor& x, const CalibRange& range, bool per_channel,
                          std::optional<int32_t> channel_axis) {
  if (x.elems() == 0) throw Error("quantize_symmetric: empty tensor");
  ChannelMap map = make_channel_map(x, per_channel, channel_axis);
  size_t channels = static_cast<size_t>(map.per_channel ? map.extent : 1);
  if (range.min.size() != channels)
    throw Error("quantize_symmetric: calibration has " + std::to_string(range.min.size()) +
                " entries, expected " + std::to_string(channels));

  QuantParams qp;
  qp.scheme = per_channel ? QuantScheme::PerChannelSymmetric
                          : QuantScheme::PerTensorSymmetric;
  qp.zero_point = 0;
  if (per_channel) qp.channel_axis = channel_axis;
  qp.calib_min = range.min;
  qp.calib_max = range.max;
  qp.scale.resize(channels);
  for (size_t c = 0; c < channels; ++c) {
    double m = std::max(std::fabs(range.min[c]), std::fabs(range.max[c]));
    if (m > 0) {
      qp.scale[c] = m / kSymmetricMax;
    } else {
      qp.scale[c] = 1.0;
      qp.degenerate_channels.push_back(static_cast<int64_t>(c));
    }
  }

  auto v = x.f32();
  std::vector<int8_t> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]))
      throw Error("quantize_symmetric: non-finite input at element " + std::to_string(i));
    out[i] = quantize_value_symmetric(v[i], qp.scale[map.channel(i)]);
  }
  return Tensor::from_i8(x.shape(), std::move(out), std::move(qp));
}

Tensor dequantize(const Tensor& q) {
  if (q.dtype() == DType::F32) return q;
  if (!q.quant()) throw Error("dequantize: tensor has no quant params");
  const QuantParams& qp = *q.quant();
  if (qp.scheme == QuantScheme::PerTensorAffine) return dequantize_affine(q);

  ChannelMap map = make_channel_map(q, qp.per_channel(), qp.channel_axis);
  auto vals = q.i8();
  std::vector<float> out(vals.size());
  for (size_t i = 0; i < vals.size(); ++i)
    out[i] = static_cast<float>(vals[i] * qp.scale[map.channel(i)]);
  return Tensor::from_f32(q.shape(), std::move(out));
}

}  // namespace exray
