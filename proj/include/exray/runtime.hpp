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

#ifndef EXRAY_RUNTIME_HPP_
#define EXRAY_RUNTIME_HPP_

#include "exray/kernels.hpp"

namespace exray {

enum class FaultMode { WrapAccumulator, NarrowAccumulator, TruncateRequant, SlowKernel };

/// One injected kernel defect, aimed at a single layer index or at every
/// layer of one type.
struct FaultSpec {
  FaultMode mode = FaultMode::WrapAccumulator;
  int slow_factor = 1;  // SlowKernel only, >= 1
  std::optional<int> layer_index;
  std::optional<LayerType> layer_type;

  bool matches(const LayerSpec& l) const;
  bool operator==(const FaultSpec&) const = default;
};

/// Spellings: acc=wrap@T, acc=narrow@T, requant=truncate@T, slow=K@T where T
/// is a layer index or a layer type name.
FaultSpec fault_from_string(const std::string& s);
std::string fault_to_string(const FaultSpec& f);

struct KernelResolver {
  ResolverKind kind = ResolverKind::Reference;
  std::vector<FaultSpec> faults;

  KernelCtx ctx_for(const LayerSpec& l) const;
  int slow_factor_for(const LayerSpec& l) const;
};

enum class CaptureMode { OutputOnly, PerLayer };

const char* capture_name(CaptureMode c);
CaptureMode capture_from_name(const std::string& s);

struct InferResult {
  Tensor output;
  std::vector<Tensor> layer_outputs;  // filled under PerLayer capture
  std::vector<int64_t> layer_latency_ns;
  int64_t total_latency_ns = 0;
  int64_t memory_bytes = 0;  // analytic: peak live activations + parameters
};

/// Runs the graph start to finish on one thread. Safe to call concurrently on
/// the same (immutable) Graph.
InferResult infer(const Graph& g, const Tensor& input, const KernelResolver& resolver,
                  CaptureMode capture = CaptureMode::OutputOnly);

/// The analytic memory figure without running anything.
int64_t estimate_memory_bytes(const Graph& g);

}  // namespace exray

#endif  // EXRAY_RUNTIME_HPP_
