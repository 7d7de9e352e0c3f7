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

#ifndef EXRAY_QUANTIZE_GRAPH_HPP_
#define EXRAY_QUANTIZE_GRAPH_HPP_

#include <span>

#include "exray/graph.hpp"

namespace exray {

struct QuantizeOptions {
  // Per output channel weight scales (axis 0) instead of one per tensor.
  bool per_channel = false;
};

/// Post-training full-integer quantization of a float graph:
///   - runs the float graph over the calibration inputs and records each
///     layer's output range,
///   - quantizes weights to symmetric i8 and biases to i32 at s_in * s_w,
///   - gives every layer symmetric per-tensor activation params from its
///     calibrated range (Pad inherits its input's params unchanged),
///   - brackets the graph with Quantize / Dequantize layers.
/// Throws on an empty calibration set or a non-float input graph.
Graph quantize_graph(const Graph& float_graph, std::span<const Tensor> calib,
                     const QuantizeOptions& opts = {});

}  // namespace exray

#endif  // EXRAY_QUANTIZE_GRAPH_HPP_
