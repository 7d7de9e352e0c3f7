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

#ifndef EXRAY_QUANT_HPP_
#define EXRAY_QUANT_HPP_

#include <optional>
#include <span>

#include "exray/tensor.hpp"

namespace exray {

// Symmetric int8 uses the magnitude-symmetric range, so zero_point stays 0.
inline constexpr int kSymmetricMax = 127;

/// Calibrated value range; one entry per tensor, or one per channel.
struct CalibRange {
  std::vector<double> min;
  std::vector<double> max;
  bool per_channel() const { return min.size() > 1; }
};

/// Running elementwise min/max over a calibration sample set. All samples
/// must share the channel extent when per_channel is set. Throws on an
/// empty sample set.
CalibRange calibrate(std::span<const Tensor> samples, bool per_channel = false,
                     std::optional<int32_t> channel_axis = std::nullopt);

/// Affine uint8 quantization over the calibrated range:
///   q = clamp(round((x - min) / (max - min) * 255), 0, 255),
/// round half away from zero. The result carries the quant params.
/// Throws on non-finite input (naming the element) or min >= max.
Tensor quantize_affine(const Tensor& x, double calib_min, double calib_max);

/// Inverse of quantize_affine: r = q / 255 * (max - min) + min.
Tensor dequantize_affine(const Tensor& q);

/// Symmetric scale for a calibrated range: max(|min|, |max|) / 127.
/// An all-zero range degenerates to scale 1 (flagged by the caller).
double symmetric_scale(double calib_min, double calib_max);

/// Symmetric int8 quantization, q = clamp(round(x / s), -127, 127) with
/// zero_point 0. Calibration is taken from the tensor itself; the explicit
/// overload accepts a precomputed range (as from calibrate()). All-zero
/// channels get scale 1 and are listed in quant().degenerate_channels.
Tensor quantize_symmetric(const Tensor& x, bool per_channel = false,
                          std::optional<int32_t> channel_axis = std::nullopt);
Tensor quantize_symmetric(const Tensor& x, const CalibRange& range,
                          bool per_channel = false,
                          std::optional<int32_t> channel_axis = std::nullopt);

/// Dequantize any quantized tensor (affine or symmetric, either axis
/// granularity) to F32. F32 input passes through unchanged.
Tensor dequantize(const Tensor& q);

/// Scalar helpers used by the int8 kernels.
inline int8_t quantize_value_symmetric(double x, double scale) {
  double q = round_half_away(x / scale);
  if (q > kSymmetricMax) q = kSymmetricMax;
  if (q < -kSymmetricMax) q = -kSymmetricMax;
  return static_cast<int8_t>(q);
}

}  // namespace exray

#endif  // EXRAY_QUANT_HPP_
