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

#ifndef EXRAY_KERNELS_HPP_
#define EXRAY_KERNELS_HPP_

#include "exray/graph.hpp"

namespace exray {

enum class ResolverKind { Reference, Optimized };

const char* resolver_name(ResolverKind k);
ResolverKind resolver_from_name(const std::string& s);

/// Fault switches threaded into a single kernel call. SlowKernel is not here;
/// the layer loop repeats the whole call instead.
struct KernelCtx {
  bool wrap_acc = false;       // i32 accumulator wraps instead of saturating
  bool narrow_acc = false;     // accumulate in saturating i16, per add
  bool trunc_requant = false;  // requantization truncates toward zero
};

/// Executes one layer. `operand` is the second input for Add, null otherwise.
/// The conv family dispatches on `kind` (naive loops vs im2col + blocked
/// accumulation); the remaining ops share one implementation.
Tensor run_layer(const LayerSpec& l, ResolverKind kind, const Tensor& in,
                 const Tensor* operand, const KernelCtx& ctx);

namespace kern {

// Shared by both resolvers.
Tensor average_pool(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor mean(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor pad(const LayerSpec& l, const Tensor& in);
Tensor add(const LayerSpec& l, const Tensor& in, const Tensor& operand, const KernelCtx& ctx);
Tensor softmax(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor quantize_layer(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor dequantize_layer(const LayerSpec& l, const Tensor& in);

// Naive loop implementations; the correctness baseline.
Tensor conv2d_reference(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor depthwise_reference(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor fully_connected_reference(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);

// Cache-aware implementations. Int8 results must match the reference bit for
// bit when ctx carries no faults; float may differ within rounding noise.
Tensor conv2d_optimized(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor depthwise_optimized(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);
Tensor fully_connected_optimized(const LayerSpec& l, const Tensor& in, const KernelCtx& ctx);

}  // namespace kern

}  // namespace exray

#endif  // EXRAY_KERNELS_HPP_
