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

#include "exray/tensor_io.hpp"

#include <cstring>
#include <fstream>

namespace exray {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'N', '0'};

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32le(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
         (static_cast<uint32_t>(b[at + 2]) << 16) |
         (static_cast<uint32_t>(b[at + 3]) << 24);
}

}  // namespace

nlohmann::json quant_to_json(const QuantParams& qp) {
  nlohmann::json j;
  j["scheme"] = scheme_name(qp.scheme);
  j["scale"] = qp.scale;
  j["zero_point"] = qp.zero_point;
  if (qp.channel_axis) j["channel_axis"] = *qp.channel_axis;
  j["calib_min"] = qp.calib_min;
  j["calib_max"] = qp.calib_max;
  if (!qp.degenerate_channels.empty())
    j["degenerate_channels"] = qp.degenerate_channels;
  return j;
}

QuantParams quant_from_json(const nlohmann::json& j) {
  QuantParams qp;
  qp.scheme = scheme_from_name(j.at("scheme").get<std::string>());
  qp.scale = j.at("scale").get<std::vector<double>>();
  qp.zero_point = j.at("zero_point").get<int32_t>();
  if (j.contains("channel_axis")) qp.channel_axis = j["channel_axis"].get<int32_t>();
  qp.calib_min = j.at("calib_min").get<std::vector<double>>();
  qp.calib_max = j.at("calib_max").get<std::vector<double>>();
  if (j.contains("degenerate_channels"))
    qp.degenerate_channels = j["degenerate_channels"].get<std::vector<int64_t>>();
  return qp;
}

std::vector<uint8_t> tensor_to_bytes(const Tensor& t) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(static_cast<uint8_t>(t.dtype()));
  if (t.rank() > 255) throw Error("tensor rank exceeds .ten limit of 255");
  out.push_back(static_cast<uint8_t>(t.rank()));
  out.push_back(0);
  out.push_back(0);
  for (int64_t e : t.shape()) {
    if (e > 0xffffffffll) throw Error("extent exceeds u32 in .ten format");
    put_u32le(out, static_cast<uint32_t>(e));
  }
  auto raw = t.raw();
  out.insert(out.end(), raw.begin(), raw.end());
  if (t.quant()) {
    std::string json = quant_to_json(*t.quant()).dump();
    put_u32le(out, static_cast<uint32_t>(json.size()));
    out.insert(out.end(), json.begin(), json.end());
  }
  return out;
}

Tensor tensor_from_bytes(std::span<const uint8_t> b) {
  if (b.size() < 8) throw Error(".ten: truncated header");
  if (std::memcmp(b.data(), kMagic, 4) != 0) throw Error(".ten: bad magic bytes");
  uint8_t code = b[4];
  if (code > 3) throw Error(".ten: unknown dtype code " + std::to_string(code));
  DType dtype = static_cast<DType>(code);
  uint8_t ndim = b[5];
  if (b[6] != 0 || b[7] != 0) throw Error(".ten: reserved bytes not zero");
  size_t at = 8;
  if (b.size() < at + 4u * ndim) throw Error(".ten: truncated shape");
  Shape shape(ndim);
  for (int i = 0; i < ndim; ++i, at += 4) shape[i] = get_u32le(b, at);

  size_t payload = shape_elems(shape) * dtype_size(dtype);
  if (b.size() < at + payload) throw Error(".ten: truncated element data");
  Tensor t = Tensor::zeros(dtype, shape);
  std::memcpy(t.raw().data(), b.data() + at, payload);
  at += payload;

  bool want_quant = dtype == DType::U8 || dtype == DType::I8;
  if (want_quant) {
    if (b.size() < at + 4) throw Error(".ten: missing quant params for quantized dtype");
    uint32_t len = get_u32le(b, at);
    at += 4;
    if (b.size() < at + len) throw Error(".ten: truncated quant params");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(b.begin() + at, b.begin() + at + len);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string(".ten: bad quant params JSON: ") + e.what());
    }
    t.set_quant(quant_from_json(j));
    at += len;
  }
  if (at != b.size()) throw Error(".ten: trailing bytes after tensor");
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::vector<uint8_t> bytes = tensor_to_bytes(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tensor file: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  try {
    return tensor_from_bytes(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace exray
