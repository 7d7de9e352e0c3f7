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

#include "exray/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "exray/common.hpp"
#include "exray/tensor_io.hpp"

namespace exray {

using nlohmann::json;

namespace {

const std::map<std::string, LayerType> kLayerTypes = {
    {"Conv2D", LayerType::Conv2D},
    {"DepthwiseConv2D", LayerType::DepthwiseConv2D},
    {"FullyConnected", LayerType::FullyConnected},
    {"AveragePool2D", LayerType::AveragePool2D},
    {"Mean", LayerType::Mean},
    {"Pad", LayerType::Pad},
    {"Add", LayerType::Add},
    {"Softmax", LayerType::Softmax},
    {"Quantize", LayerType::Quantize},
    {"Dequantize", LayerType::Dequantize},
};

[[noreturn]] void layer_fail(const LayerSpec& l, const std::string& what) {
  throw Error("layer " + std::to_string(l.index) + " (" + l.name + "): " + what);
}

int64_t flat_count(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

int out_extent(const LayerSpec& l, int64_t in, int pad_lo, int pad_hi, int k, int stride) {
  int64_t padded = in + pad_lo + pad_hi;
  if (padded < k) layer_fail(l, "window larger than padded input");
  return static_cast<int>((padded - k) / stride + 1);
}

void check_activation_quant(const LayerSpec& l, const QuantParams& qp) {
  if (qp.scheme != QuantScheme::PerTensorSymmetric)
    layer_fail(l, "activation quant must be per-tensor symmetric");
}

}  // namespace

const char* layer_type_name(LayerType t) {
  for (const auto& [name, v] : kLayerTypes)
    if (v == t) return name.c_str();
  throw Error("bad layer type");
}

LayerType layer_type_from_name(const std::string& s) {
  auto it = kLayerTypes.find(s);
  if (it == kLayerTypes.end()) throw Error("unknown layer type '" + s + "'");
  return it->second;
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::ReLU6: return "relu6";
  }
  throw Error("bad activation");
}

Activation activation_from_name(const std::string& s) {
  if (s == "none") return Activation::None;
  if (s == "relu") return Activation::ReLU;
  if (s == "relu6") return Activation::ReLU6;
  throw Error("unknown activation '" + s + "'");
}

bool Graph::quantized() const {
  for (const auto& l : layers)
    if (l.out_quant) return true;
  return input_dtype == DType::I8;
}

std::vector<LayerIO> infer_shapes(const Graph& g) {
  if (g.input_shape.empty()) throw Error("graph input shape is empty");
  for (int64_t e : g.input_shape)
    if (e <= 0) throw Error("graph input extents must be positive");
  std::vector<LayerIO> io;
  io.reserve(g.layers.size());
  Shape cur = g.input_shape;
  DType cur_dtype = g.input_dtype;

  for (const auto& l : g.layers) {
    bool int8_in = cur_dtype == DType::I8;
    Shape out;
    DType out_dtype = cur_dtype;

    switch (l.type) {
      case LayerType::Conv2D: {
        if (cur.size() != 3) layer_fail(l, "needs a [h, w, c] input");
        if (!l.weights) layer_fail(l, "missing weights");
        const auto& p = l.conv();
        const Shape& w = l.weights->shape();
        if (w.size() != 4 || w[1] != p.kh || w[2] != p.kw)
          layer_fail(l, "weights must be [oc, kh, kw, ic]");
        if (w[3] != cur[2])
          layer_fail(l, "weight input channels " + std::to_string(w[3]) +
                            " do not match input channels " + std::to_string(cur[2]));
        int oh = out_extent(l, cur[0], p.pad_top, p.pad_bottom, p.kh, p.stride_h);
        int ow = out_extent(l, cur[1], p.pad_left, p.pad_right, p.kw, p.stride_w);
        out = {oh, ow, w[0]};
        break;
      }
      case LayerType::DepthwiseConv2D: {
        if (cur.size() != 3) layer_fail(l, "needs a [h, w, c] input");
        if (!l.weights) layer_fail(l, "missing weights");
        const auto& p = l.conv();
        const Shape& w = l.weights->shape();
        if (w.size() != 3 || w[1] != p.kh || w[2] != p.kw)
          layer_fail(l, "weights must be [c, kh, kw]");
        if (w[0] != cur[2])
          layer_fail(l, "weight channels " + std::to_string(w[0]) +
                            " do not match input channels " + std::to_string(cur[2]));
        int oh = out_extent(l, cur[0], p.pad_top, p.pad_bottom, p.kh, p.stride_h);
        int ow = out_extent(l, cur[1], p.pad_left, p.pad_right, p.kw, p.stride_w);
        out = {oh, ow, cur[2]};
        break;
      }
      case LayerType::FullyConnected: {
        if (!l.weights) layer_fail(l, "missing weights");
        const Shape& w = l.weights->shape();
        if (w.size() != 2) layer_fail(l, "weights must be [out, in]");
        if (w[1] != flat_count(cur))
          layer_fail(l, "weight input size " + std::to_string(w[1]) +
                            " does not match flattened input " + std::to_string(flat_count(cur)));
        out = {w[0]};
        break;
      }
      case LayerType::AveragePool2D: {
        if (cur.size() != 3) layer_fail(l, "needs a [h, w, c] input");
        const auto& p = l.pool();
        int oh = out_extent(l, cur[0], p.pad_top, p.pad_bottom, p.kh, p.stride_h);
        int ow = out_extent(l, cur[1], p.pad_left, p.pad_right, p.kw, p.stride_w);
        out = {oh, ow, cur[2]};
        break;
      }
      case LayerType::Mean: {
        if (cur.size() != 3) layer_fail(l, "needs a [h, w, c] input");
        out = {cur[2]};
        break;
      }
      case LayerType::Pad: {
        if (cur.size() != 3) layer_fail(l, "needs a [h, w, c] input");
        const auto& p = l.pad();
        if (p.top < 0 || p.bottom < 0 || p.left < 0 || p.right < 0)
          layer_fail(l, "negative padding");
        out = {cur[0] + p.top + p.bottom, cur[1] + p.left + p.right, cur[2]};
        break;
      }
      case LayerType::Add: {
        const auto& p = l.add();
        if (p.operand < 0 || p.operand >= l.index)
          layer_fail(l, "operand must reference a strictly earlier layer");
        if (io[p.operand].shape != cur)
          layer_fail(l, "operand shape does not match input shape");
        if (io[p.operand].dtype != cur_dtype) layer_fail(l, "operand dtype mismatch");
        out = cur;
        break;
      }
      case LayerType::Softmax: {
        out = cur;
        break;
      }
      case LayerType::Quantize: {
        if (int8_in) layer_fail(l, "input is already quantized");
        out = cur;
        out_dtype = DType::I8;
        break;
      }
      case LayerType::Dequantize: {
        if (!int8_in) layer_fail(l, "input is not quantized");
        out = cur;
        out_dtype = DType::F32;
        break;
      }
    }

    // Quant bookkeeping: a layer emits i8 exactly when out_quant is present.
    if (l.type != LayerType::Quantize && l.type != LayerType::Dequantize)
      out_dtype = cur_dtype;
    if (out_dtype == DType::I8) {
      if (!l.out_quant) layer_fail(l, "quantized output needs quant params");
      check_activation_quant(l, *l.out_quant);
    } else if (l.out_quant) {
      layer_fail(l, "float output must not carry quant params");
    }

    // Weight/bias dtype rules for the layers that own parameters.
    if (l.type == LayerType::Conv2D || l.type == LayerType::DepthwiseConv2D ||
        l.type == LayerType::FullyConnected) {
      if (int8_in) {
        if (l.weights->dtype() != DType::I8) layer_fail(l, "quantized layer needs i8 weights");
        const QuantParams& wq = *l.weights->quant();
        if (wq.scheme == QuantScheme::PerTensorAffine)
          layer_fail(l, "weights must use a symmetric scheme");
        if (wq.scheme == QuantScheme::PerChannelSymmetric) {
          if (wq.channel_axis.value_or(-1) != 0)
            layer_fail(l, "per-channel weights must quantize along axis 0");
          if (static_cast<int64_t>(wq.scale.size()) != l.weights->shape()[0])
            layer_fail(l, "per-channel scale count mismatch");
        }
        if (l.bias && l.bias->dtype() != DType::I32) layer_fail(l, "quantized layer needs i32 bias");
      } else {
        if (l.weights->dtype() != DType::F32) layer_fail(l, "float layer needs f32 weights");
        if (l.bias && l.bias->dtype() != DType::F32) layer_fail(l, "float layer needs f32 bias");
      }
      int64_t oc = l.weights->shape()[0];
      if (l.bias && (l.bias->shape().size() != 1 || l.bias->shape()[0] != oc))
        layer_fail(l, "bias must be [out_channels]");
    } else if (l.weights || l.bias) {
      layer_fail(l, "layer type does not take weights");
    }

    io.push_back({out, out_dtype});
    cur = out;
    cur_dtype = out_dtype;
  }
  return io;
}

void Graph::validate() const {
  if (layers.empty()) throw Error("graph has no layers");
  for (size_t i = 0; i < layers.size(); ++i)
    if (layers[i].index != static_cast<int>(i))
      throw Error("layer indices must be dense and ordered, got " +
                  std::to_string(layers[i].index) + " at position " + std::to_string(i));
  if (output_layer != static_cast<int>(layers.size()) - 1)
    throw Error("output layer must be the last layer");
  if (input_dtype == DType::I8) {
    if (!input_quant) throw Error("quantized graph input needs quant params");
    if (input_quant->scheme != QuantScheme::PerTensorSymmetric)
      throw Error("graph input quant must be per-tensor symmetric");
  } else if (input_dtype == DType::F32) {
    if (input_quant) throw Error("float graph input must not carry quant params");
  } else {
    throw Error("graph input dtype must be f32 or i8");
  }
  auto io = infer_shapes(*this);
  // Pad must not change the quantization of what flows through it.
  DType prev = input_dtype;
  const QuantParams* prev_qp = input_quant ? &*input_quant : nullptr;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].type == LayerType::Pad && prev == DType::I8 &&
        !(*layers[i].out_quant == *prev_qp))
      throw Error("layer " + std::to_string(i) + " (" + layers[i].name +
                  "): pad must propagate its input quant params");
    prev = io[i].dtype;
    prev_qp = layers[i].out_quant ? &*layers[i].out_quant : prev_qp;
  }
}

namespace {

json params_to_json(const LayerSpec& l) {
  json j = json::object();
  switch (l.type) {
    case LayerType::Conv2D:
    case LayerType::DepthwiseConv2D: {
      const auto& p = l.conv();
      j["kernel"] = {p.kh, p.kw};
      j["stride"] = {p.stride_h, p.stride_w};
      j["pad"] = {p.pad_top, p.pad_bottom, p.pad_left, p.pad_right};
      j["activation"] = activation_name(p.act);
      break;
    }
    case LayerType::FullyConnected:
      j["activation"] = activation_name(l.fc().act);
      break;
    case LayerType::AveragePool2D: {
      const auto& p = l.pool();
      j["kernel"] = {p.kh, p.kw};
      j["stride"] = {p.stride_h, p.stride_w};
      j["pad"] = {p.pad_top, p.pad_bottom, p.pad_left, p.pad_right};
      break;
    }
    case LayerType::Pad: {
      const auto& p = l.pad();
      j["pad"] = {p.top, p.bottom, p.left, p.right};
      break;
    }
    case LayerType::Add: {
      const auto& p = l.add();
      j["operand"] = p.operand;
      j["activation"] = activation_name(p.act);
      break;
    }
    default:
      break;
  }
  return j;
}

std::array<int, 4> get_int4(const json& j, const char* key) {
  auto v = j.at(key).get<std::vector<int>>();
  if (v.size() != 4) throw Error(std::string("'") + key + "' must have 4 entries");
  return {v[0], v[1], v[2], v[3]};
}

std::array<int, 2> get_int2(const json& j, const char* key) {
  auto v = j.at(key).get<std::vector<int>>();
  if (v.size() != 2) throw Error(std::string("'") + key + "' must have 2 entries");
  return {v[0], v[1]};
}

LayerParams params_from_json(LayerType type, const json& j) {
  switch (type) {
    case LayerType::Conv2D:
    case LayerType::DepthwiseConv2D: {
      ConvParams p;
      auto k = get_int2(j, "kernel");
      auto s = get_int2(j, "stride");
      auto pd = get_int4(j, "pad");
      p.kh = k[0]; p.kw = k[1];
      p.stride_h = s[0]; p.stride_w = s[1];
      p.pad_top = pd[0]; p.pad_bottom = pd[1]; p.pad_left = pd[2]; p.pad_right = pd[3];
      p.act = activation_from_name(j.at("activation").get<std::string>());
      if (p.kh <= 0 || p.kw <= 0 || p.stride_h <= 0 || p.stride_w <= 0)
        throw Error("kernel and stride must be positive");
      return p;
    }
    case LayerType::FullyConnected: {
      FcParams p;
      p.act = activation_from_name(j.at("activation").get<std::string>());
      return p;
    }
    case LayerType::AveragePool2D: {
      PoolParams p;
      auto k = get_int2(j, "kernel");
      auto s = get_int2(j, "stride");
      auto pd = get_int4(j, "pad");
      p.kh = k[0]; p.kw = k[1];
      p.stride_h = s[0]; p.stride_w = s[1];
      p.pad_top = pd[0]; p.pad_bottom = pd[1]; p.pad_left = pd[2]; p.pad_right = pd[3];
      if (p.kh <= 0 || p.kw <= 0 || p.stride_h <= 0 || p.stride_w <= 0)
        throw Error("kernel and stride must be positive");
      return p;
    }
    case LayerType::Pad: {
      PadParams p;
      auto pd = get_int4(j, "pad");
      p.top = pd[0]; p.bottom = pd[1]; p.left = pd[2]; p.right = pd[3];
      return p;
    }
    case LayerType::Add: {
      AddParams p;
      p.operand = j.at("operand").get<int>();
      p.act = activation_from_name(j.at("activation").get<std::string>());
      return p;
    }
    default:
      return NoParams{};
  }
}

std::string blob_name(int layer, const char* tag) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%03d_%s.ten", layer, tag);
  return buf;
}

json graph_to_json(const Graph& g) {
  json j;
  j["name"] = g.name;
  j["input"]["shape"] = g.input_shape;
  j["input"]["dtype"] = dtype_name(g.input_dtype);
  if (g.input_quant) j["input"]["quant"] = quant_to_json(*g.input_quant);
  j["output_layer"] = g.output_layer;
  json layers = json::array();
  for (const auto& l : g.layers) {
    json jl;
    jl["index"] = l.index;
    jl["name"] = l.name;
    jl["type"] = layer_type_name(l.type);
    jl["params"] = params_to_json(l);
    if (l.weights) jl["weights"] = "blobs/" + blob_name(l.index, "w");
    if (l.bias) jl["bias"] = "blobs/" + blob_name(l.index, "b");
    if (l.out_quant) jl["out_quant"] = quant_to_json(*l.out_quant);
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j;
}

}  // namespace

Graph load_graph(const std::filesystem::path& model_json_or_dir) {
  namespace fs = std::filesystem;
  fs::path model_path = model_json_or_dir;
  if (fs::is_directory(model_path)) model_path /= "model.json";
  std::ifstream in(model_path);
  if (!in) throw Error("cannot open " + model_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(model_path.string() + ": " + e.what());
  }
  fs::path base = model_path.parent_path();

  Graph g;
  try {
    g.name = j.at("name").get<std::string>();
    g.input_shape = j.at("input").at("shape").get<Shape>();
    g.input_dtype = dtype_from_name(j.at("input").at("dtype").get<std::string>());
    if (j.at("input").contains("quant"))
      g.input_quant = quant_from_json(j.at("input").at("quant"));
    g.output_layer = j.at("output_layer").get<int>();
    for (const auto& jl : j.at("layers")) {
      LayerSpec l;
      l.index = jl.at("index").get<int>();
      l.name = jl.at("name").get<std::string>();
      l.type = layer_type_from_name(jl.at("type").get<std::string>());
      l.params = params_from_json(l.type, jl.value("params", json::object()));
      if (jl.contains("weights")) {
        fs::path p = base / jl.at("weights").get<std::string>();
        if (!fs::exists(p))
          throw Error("layer " + std::to_string(l.index) + ": missing blob " + p.string());
        l.weights = read_tensor(p);
      }
      if (jl.contains("bias")) {
        fs::path p = base / jl.at("bias").get<std::string>();
        if (!fs::exists(p))
          throw Error("layer " + std::to_string(l.index) + ": missing blob " + p.string());
        l.bias = read_tensor(p);
      }
      if (jl.contains("out_quant")) l.out_quant = quant_from_json(jl.at("out_quant"));
      g.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(model_path.string() + ": " + e.what());
  }
  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(model_path.string() + ": " + e.what());
  }
  return g;
}

void save_graph(const std::filesystem::path& dir, const Graph& g) {
  namespace fs = std::filesystem;
  g.validate();
  fs::create_directories(dir / "blobs");
  for (const auto& l : g.layers) {
    if (l.weights) write_tensor(dir / "blobs" / blob_name(l.index, "w"), *l.weights);
    if (l.bias) write_tensor(dir / "blobs" / blob_name(l.index, "b"), *l.bias);
  }
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw Error("cannot open " + (dir / "model.json").string() + " for writing");
  out << graph_to_json(g).dump(2) << "\n";
  if (!out) throw Error("short write to " + (dir / "model.json").string());
}

uint64_t model_hash(const Graph& g) {
  std::string meta = graph_to_json(g).dump();
  uint64_t h = fnv1a64(meta.data(), meta.size());
  // Fold in the raw parameter bytes; the JSON only names the blobs.
  for (const auto& l : g.layers) {
    for (const auto* t : {l.weights ? &*l.weights : nullptr, l.bias ? &*l.bias : nullptr}) {
      if (!t) continue;
      auto bytes = tensor_to_bytes(*t);
      h = fnv1a64(bytes.data(), bytes.size(), h);
    }
  }
  return h;
}

std::vector<double> weight_channel_min_steps(const Graph& g) {
  std::vector<double> out(g.layers.size(), -1.0);
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    if (!l.weights || l.weights->dtype() != DType::I8) continue;
    const Shape& s = l.weights->shape();
    int64_t oc = s[0];
    int64_t per = 1;
    for (size_t d = 1; d < s.size(); ++d) per *= s[d];
    auto q = l.weights->i8();
    double min_steps = std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < oc; ++c) {
      int steps = 0;
      for (int64_t k = 0; k < per; ++k)
        steps = std::max<int>(steps, std::abs(q[c * per + k]));
      min_steps = std::min(min_steps, static_cast<double>(steps));
    }
    out[i] = min_steps;
  }
  return out;
}

}  // namespace exray
