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

#ifndef EXRAY_GRAPH_HPP_
#define EXRAY_GRAPH_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "exray/tensor.hpp"

namespace exray {

enum class LayerType {
  Conv2D,
  DepthwiseConv2D,
  FullyConnected,
  AveragePool2D,
  Mean,
  Pad,
  Add,
  Softmax,
  Quantize,
  Dequantize,
};

const char* layer_type_name(LayerType t);
LayerType layer_type_from_name(const std::string& s);

enum class Activation { None, ReLU, ReLU6 };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& s);

struct ConvParams {  // Conv2D and DepthwiseConv2D
  int kh = 1, kw = 1;
  int stride_h = 1, stride_w = 1;
  int pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
  Activation act = Activation::None;
  bool operator==(const ConvParams&) const = default;
};

struct FcParams {
  Activation act = Activation::None;
  bool operator==(const FcParams&) const = default;
};

struct PoolParams {  // AveragePool2D
  int kh = 1, kw = 1;
  int stride_h = 1, stride_w = 1;
  int pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
  bool operator==(const PoolParams&) const = default;
};

struct PadParams {  // zero padding of the spatial dims
  int top = 0, bottom = 0, left = 0, right = 0;
  bool operator==(const PadParams&) const = default;
};

struct AddParams {
  int operand = -1;  // index of the earlier layer providing the second input
  Activation act = Activation::None;
  bool operator==(const AddParams&) const = default;
};

struct NoParams {
  bool operator==(const NoParams&) const = default;
};

using LayerParams = std::variant<NoParams, ConvParams, FcParams, PoolParams, PadParams, AddParams>;

/// One node of the chain. Layer i consumes the output of layer i-1 (the graph
/// input for i == 0); Add additionally consumes an earlier layer's output.
struct LayerSpec {
  int index = -1;
  std::string name;
  LayerType type = LayerType::Softmax;
  LayerParams params;
  std::optional<Tensor> weights;  // Conv2D [oc,kh,kw,ic]; DepthwiseConv2D [c,kh,kw]; FC [out,in]
  std::optional<Tensor> bias;     // f32, or i32 at scale s_in * s_w
  std::optional<QuantParams> out_quant;  // present iff the layer emits i8

  const ConvParams& conv() const { return std::get<ConvParams>(params); }
  const FcParams& fc() const { return std::get<FcParams>(params); }
  const PoolParams& pool() const { return std::get<PoolParams>(params); }
  const PadParams& pad() const { return std::get<PadParams>(params); }
  const AddParams& add() const { return std::get<AddParams>(params); }
};

struct Graph {
  std::string name;
  Shape input_shape;
  DType input_dtype = DType::F32;
  std::optional<QuantParams> input_quant;  // required iff input_dtype == I8
  std::vector<LayerSpec> layers;
  int output_layer = -1;

  bool quantized() const;  // any i8-emitting layer present
  void validate() const;   // invariants + full shape inference
};

struct LayerIO {
  Shape shape;
  DType dtype = DType::F32;
};

/// Output shape/dtype per layer; throws naming the offending layer.
std::vector<LayerIO> infer_shapes(const Graph& g);

/// Serialized form: `model.json` plus a `blobs/` directory of `.ten` weights.
Graph load_graph(const std::filesystem::path& model_json_or_dir);
void save_graph(const std::filesystem::path& dir, const Graph& g);

/// Deterministic identity over structure and weights.
uint64_t model_hash(const Graph& g);

/// Σ|q_w| is not the point; what matters is how many quantization steps each
/// output channel's weights actually span. A squashed channel shows up as 0.
/// Returns one entry per layer, -1 for layers without quantized weights.
std::vector<double> weight_channel_min_steps(const Graph& g);

}  // namespace exray

#endif  // EXRAY_GRAPH_HPP_
