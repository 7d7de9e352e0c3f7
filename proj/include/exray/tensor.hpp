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

#ifndef EXRAY_TENSOR_HPP_
#define EXRAY_TENSOR_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exray/common.hpp"

namespace exray {

// Codes match the .ten on-disk dtype byte.
enum class DType : uint8_t { F32 = 0, U8 = 1, I8 = 2, I32 = 3 };

size_t dtype_size(DType d);
const char* dtype_name(DType d);
DType dtype_from_name(const std::string& s);

enum class QuantScheme { PerTensorAffine, PerTensorSymmetric, PerChannelSymmetric };

const char* scheme_name(QuantScheme s);
QuantScheme scheme_from_name(const std::string& s);

/// Quantization parameters attached to U8/I8 tensors. scale / calib_min /
/// calib_max hold one entry for per-tensor schemes and one per channel for
/// PerChannelSymmetric. zero_point is 0 for the symmetric schemes.
struct QuantParams {
  QuantScheme scheme = QuantScheme::PerTensorAffine;
  std::vector<double> scale;
  int32_t zero_point = 0;
  std::optional<int32_t> channel_axis;
  std::vector<double> calib_min;
  std::vector<double> calib_max;
  // Channels whose calibration range was all-zero; their scale was forced
  // to 1 instead of failing. {0} for the per-tensor case.
  std::vector<int64_t> degenerate_channels;

  bool per_channel() const { return scheme == QuantScheme::PerChannelSymmetric; }
  bool symmetric() const { return scheme != QuantScheme::PerTensorAffine; }

  // Throws unless the internal vectors are consistent with the scheme and,
  // when per-channel, with the given channel extent (-1 skips that check).
  void validate(int64_t channel_extent = -1) const;

  bool operator==(const QuantParams&) const = default;
};

using Shape = std::vector<int64_t>;

int64_t shape_elems(const Shape& s);
std::string shape_str(const Shape& s);

/// N-dimensional row-major dense array. Value-semantic; the universal payload
/// of the runtime, the trace blobs, and the validator.
///
/// Invariants: byte length == elems * dtype size; quant params are present
/// exactly when dtype is U8 or I8.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(DType dtype, Shape shape);
  static Tensor from_f32(Shape shape, std::vector<float> values);
  static Tensor from_i32(Shape shape, std::vector<int32_t> values);
  // U8/I8 factories require quant params up front.
  static Tensor from_u8(Shape shape, std::vector<uint8_t> values, QuantParams qp);
  static Tensor from_i8(Shape shape, std::vector<int8_t> values, QuantParams qp);

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t elems() const { return shape_elems(shape_); }
  size_t byte_size() const { return data_.size(); }

  std::span<const uint8_t> raw() const { return data_; }
  std::span<uint8_t> raw() { return data_; }

  std::span<const float> f32() const;
  std::span<float> f32();
  std::span<const uint8_t> u8() const;
  std::span<uint8_t> u8();
  std::span<const int8_t> i8() const;
  std::span<int8_t> i8();
  std::span<const int32_t> i32() const;
  std::span<int32_t> i32();

  const std::optional<QuantParams>& quant() const { return quant_; }
  void set_quant(std::optional<QuantParams> qp);

  /// Element value as double regardless of dtype (no dequantization).
  double value_at(int64_t flat) const;

  bool same_data(const Tensor& other) const;  // bitwise payload compare
  bool operator==(const Tensor& other) const;

 private:
  void check_dtype(DType want) const;

  DType dtype_ = DType::F32;
  Shape shape_;
  std::vector<uint8_t> data_;
  std::optional<QuantParams> quant_;
};

/// Row-major strides for a shape.
std::vector<int64_t> strides_of(const Shape& s);

/// Channel coordinate of a flat row-major index along `axis`.
inline int64_t channel_of(int64_t flat, int64_t stride, int64_t extent) {
  return (flat / stride) % extent;
}

}  // namespace exray

#endif  // EXRAY_TENSOR_HPP_
