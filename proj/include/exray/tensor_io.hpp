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

#ifndef EXRAY_TENSOR_IO_HPP_
#define EXRAY_TENSOR_IO_HPP_

#include <filesystem>

#include <json.hpp>

#include "exray/tensor.hpp"

namespace exray {

// .ten binary layout, all little-endian:
//   magic "TEN0" | u8 dtype code | u8 ndim | 2 reserved zero bytes |
//   ndim x u32 extents | row-major element data |
//   [u32 json_len | QuantParams JSON]   (present iff the tensor is quantized)
// Identical tensors serialize to identical bytes.

std::vector<uint8_t> tensor_to_bytes(const Tensor& t);
Tensor tensor_from_bytes(std::span<const uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

nlohmann::json quant_to_json(const QuantParams& qp);
QuantParams quant_from_json(const nlohmann::json& j);

}  // namespace exray

#endif  // EXRAY_TENSOR_IO_HPP_
