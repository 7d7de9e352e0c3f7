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

#include "exray/tensor.hpp"

#include <cstring>
#include <sstream>

namespace exray {

size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::U8: return 1;
    case DType::I8: return 1;
    case DType::I32: return 4;
  }
  throw Error("bad dtype code");
}

const char* dtype_name(DType d) {
  switch (d) {
    case DType::F32: return "F32";
    case DType::U8: return "U8";
    case DType::I8: return "I8";
    case DType::I32: return "I32";
  }
  throw Error("bad dtype code");
}

DType dtype_from_name(const std::string& s) {
  if (s == "F32") return DType::F32;
  if (s == "U8") return DType::U8;
  if (s == "I8") return DType::I8;
  if (s == "I32") return DType::I32;
  throw Error("unknown dtype name: " + s);
}

const char* scheme_name(QuantScheme s) {
  switch (s) {
    case QuantScheme::PerTensorAffine: return "per_tensor_affine";
    case QuantScheme::PerTensorSymmetric: return "per_tensor_symmetric";
    case QuantScheme::PerChannelSymmetric: return "per_channel_symmetric";
  }
  throw Error("bad scheme code");
}

QuantScheme scheme_from_name(const std::string& s) {
  if (s == "per_tensor_affine") return QuantScheme::PerTensorAffine;
  if (s == "per_tensor_symmetric") return QuantScheme::PerTensorSymmetric;
  if (s == "per_channel_symmetric") return QuantScheme::PerChannelSymmetric;
  throw Error("unknown quant scheme: " + s);
}

void QuantParams::validate(int64_t channel_extent) const {
  size_t n = scale.size();
  if (n == 0) throw Error("quant params: empty scale");
  if (calib_min.size() != n || calib_max.size() != n)
    throw Error("quant params: scale/calib length mismatch");
  if (per_channel()) {
    if (!channel_axis.has_value())
      throw Error("per-channel quant params require channel_axis");
    if (channel_extent >= 0 && static_cast<int64_t>(n) != channel_extent)
      throw Error("per-channel scale length " + std::to_string(n) +
                  " != channel extent " + std::to_string(channel_extent));
  } else {
    if (n != 1) throw Error("per-tensor quant params must have one scale");
  }
  if (symmetric() && zero_point != 0)
    throw Error("symmetric quant params must have zero_point 0");
  for (size_t i = 0; i < n; ++i) {
    if (!(scale[i] > 0)) throw Error("quant scale must be positive");
    if (scheme == QuantScheme::PerTensorAffine && !(calib_min[i] < calib_max[i]))
      throw Error("affine quant params require calib_min < calib_max");
  }
}

int64_t shape_elems(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e < 0) throw Error("negative shape extent");
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

Tensor Tensor::zeros(DType dtype, Shape shape) {
  Tensor t;
  t.dtype_ = dtype;
  t.shape_ = std::move(shape);
  t.data_.assign(shape_elems(t.shape_) * dtype_size(dtype), 0);
  return t;
}

Tensor Tensor::from_f32(Shape shape, std::vector<float> values) {
  if (shape_elems(shape) != static_cast<int64_t>(values.size()))
    throw Error("from_f32: " + std::to_string(values.size()) +
                " values for shape " + shape_str(shape));
  Tensor t = zeros(DType::F32, std::move(shape));
  std::memcpy(t.data_.data(), values.data(), values.size() * 4);
  return t;
}

Tensor Tensor::from_i32(Shape shape, std::vector<int32_t> values) {
  if (shape_elems(shape) != static_cast<int64_t>(values.size()))
    throw Error("from_i32: element count mismatch for " + shape_str(shape));
  Tensor t = zeros(DType::I32, std::move(shape));
  std::memcpy(t.data_.data(), values.data(), values.size() * 4);
  return t;
}

Tensor Tensor::from_u8(Shape shape, std::vector<uint8_t> values, QuantParams qp) {
  if (shape_elems(shape) != static_cast<int64_t>(values.size()))
    throw Error("from_u8: element count mismatch for " + shape_str(shape));
  Tensor t;
  t.dtype_ = DType::U8;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  t.set_quant(std::move(qp));
  return t;
}

Tensor Tensor::from_i8(Shape shape, std::vector<int8_t> values, QuantParams qp) {
  if (shape_elems(shape) != static_cast<int64_t>(values.size()))
    throw Error("from_i8: element count mismatch for " + shape_str(shape));
  Tensor t;
  t.dtype_ = DType::I8;
  t.shape_ = std::move(shape);
  t.data_.resize(values.size());
  std::memcpy(t.data_.data(), values.data(), values.size());
  t.set_quant(std::move(qp));
  return t;
}

void Tensor::set_quant(std::optional<QuantParams> qp) {
  bool quantized_dtype = dtype_ == DType::U8 || dtype_ == DType::I8;
  if (qp.has_value() != quantized_dtype)
    throw Error(std::string("quant params must be present iff dtype is U8/I8; dtype=") +
                dtype_name(dtype_));
  if (qp) {
    int64_t extent = -1;
    if (qp->per_channel() && qp->channel_axis) {
      int32_t ax = *qp->channel_axis;
      if (ax < 0 || ax >= rank())
        throw Error("channel_axis " + std::to_string(ax) + " out of range for " +
                    shape_str(shape_));
      extent = shape_[ax];
    }
    qp->validate(extent);
  }
  quant_ = std::move(qp);
}

void Tensor::check_dtype(DType want) const {
  if (dtype_ != want)
    throw Error(std::string("tensor dtype is ") + dtype_name(dtype_) + ", expected " +
                dtype_name(want));
}

std::span<const float> Tensor::f32() const {
  check_dtype(DType::F32);
  return {reinterpret_cast<const float*>(data_.data()), static_cast<size_t>(elems())};
}
std::span<float> Tensor::f32() {
  check_dtype(DType::F32);
  return {reinterpret_cast<float*>(data_.data()), static_cast<size_t>(elems())};
}
std::span<const uint8_t> Tensor::u8() const {
  check_dtype(DType::U8);
  return {data_.data(), static_cast<size_t>(elems())};
}
std::span<uint8_t> Tensor::u8() {
  check_dtype(DType::U8);
  return {data_.data(), static_cast<size_t>(elems())};
}
std::span<const int8_t> Tensor::i8() const {
  check_dtype(DType::I8);
  return {reinterpret_cast<const int8_t*>(data_.data()), static_cast<size_t>(elems())};
}
std::span<int8_t> Tensor::i8() {
  check_dtype(DType::I8);
  return {reinterpret_cast<int8_t*>(data_.data()), static_cast<size_t>(elems())};
}
std::span<const int32_t> Tensor::i32() const {
  check_dtype(DType::I32);
  return {reinterpret_cast<const int32_t*>(data_.data()), static_cast<size_t>(elems())};
}
std::span<int32_t> Tensor::i32() {
  check_dtype(DType::I32);
  return {reinterpret_cast<int32_t*>(data_.data()), static_cast<size_t>(elems())};
}

double Tensor::value_at(int64_t flat) const {
  switch (dtype_) {
    case DType::F32: return f32()[flat];
    case DType::U8: return u8()[flat];
    case DType::I8: return i8()[flat];
    case DType::I32: return i32()[flat];
  }
  throw Error("bad dtype code");
}

bool Tensor::same_data(const Tensor& other) const {
  return data_ == other.data_;
}

bool Tensor::operator==(const Tensor& other) const {
  return dtype_ == other.dtype_ && shape_ == other.shape_ && data_ == other.data_ &&
         quant_ == other.quant_;
}

}  // namespace exray
