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

#include "exray/runtime.hpp"

#include <chrono>
#include <map>

#include "exray/common.hpp"

namespace exray {

namespace {

int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

bool FaultSpec::matches(const LayerSpec& l) const {
  if (layer_index) return *layer_index == l.index;
  if (layer_type) return *layer_type == l.type;
  return false;
}

FaultSpec fault_from_string(const std::string& s) {
  auto eq = s.find('=');
  auto at = s.find('@');
  if (eq == std::string::npos || at == std::string::npos || at < eq)
    throw Error("bad fault spec '" + s + "', want kind=mode@target");
  std::string kind = s.substr(0, eq);
  std::string mode = s.substr(eq + 1, at - eq - 1);
  std::string target = s.substr(at + 1);
  if (target.empty()) throw Error("bad fault spec '" + s + "': empty target");

  FaultSpec f;
  if (kind == "acc") {
    if (mode == "wrap")
      f.mode = FaultMode::WrapAccumulator;
    else if (mode == "narrow")
      f.mode = FaultMode::NarrowAccumulator;
    else
      throw Error("bad fault spec '" + s + "': acc mode must be wrap or narrow");
  } else if (kind == "requant") {
    if (mode != "truncate")
      throw Error("bad fault spec '" + s + "': requant mode must be truncate");
    f.mode = FaultMode::TruncateRequant;
  } else if (kind == "slow") {
    f.mode = FaultMode::SlowKernel;
    try {
      size_t used = 0;
      f.slow_factor = std::stoi(mode, &used);
      if (used != mode.size()) throw std::invalid_argument(mode);
    } catch (const std::exception&) {
      throw Error("bad fault spec '" + s + "': slow factor must be an integer");
    }
    if (f.slow_factor < 1) throw Error("bad fault spec '" + s + "': slow factor must be >= 1");
  } else {
    throw Error("bad fault spec '" + s + "': kind must be acc, requant, or slow");
  }

  if (!target.empty() && std::isdigit(static_cast<unsigned char>(target[0]))) {
    try {
      size_t used = 0;
      f.layer_index = std::stoi(target, &used);
      if (used != target.size()) throw std::invalid_argument(target);
    } catch (const std::exception&) {
      throw Error("bad fault spec '" + s + "': bad layer index");
    }
  } else {
    f.layer_type = layer_type_from_name(target);  // throws on unknown type
  }
  return f;
}

std::string fault_to_string(const FaultSpec& f) {
  std::string head;
  switch (f.mode) {
    case FaultMode::WrapAccumulator: head = "acc=wrap"; break;
    case FaultMode::NarrowAccumulator: head = "acc=narrow"; break;
    case FaultMode::TruncateRequant: head = "requant=truncate"; break;
    case FaultMode::SlowKernel: head = "slow=" + std::to_string(f.slow_factor); break;
  }
  std::string target =
      f.layer_index ? std::to_string(*f.layer_index) : layer_type_name(*f.layer_type);
  return head + "@" + target;
}

KernelCtx KernelResolver::ctx_for(const LayerSpec& l) const {
  KernelCtx ctx;
  for (const auto& f : faults) {
    if (!f.matches(l)) continue;
    switch (f.mode) {
      case FaultMode::WrapAccumulator: ctx.wrap_acc = true; break;
      case FaultMode::NarrowAccumulator: ctx.narrow_acc = true; break;
      case FaultMode::TruncateRequant: ctx.trunc_requant = true; break;
      case FaultMode::SlowKernel: break;
    }
  }
  return ctx;
}

int KernelResolver::slow_factor_for(const LayerSpec& l) const {
  int factor = 1;
  for (const auto& f : faults)
    if (f.mode == FaultMode::SlowKernel && f.matches(l))
      factor = std::max(factor, f.slow_factor);
  return factor;
}

const char* capture_name(CaptureMode c) {
  return c == CaptureMode::OutputOnly ? "output_only" : "per_layer";
}

CaptureMode capture_from_name(const std::string& s) {
  if (s == "output_only") return CaptureMode::OutputOnly;
  if (s == "per_layer") return CaptureMode::PerLayer;
  throw Error("unknown capture mode '" + s + "'");
}

int64_t estimate_memory_bytes(const Graph& g) {
  auto io = infer_shapes(g);
  auto bytes_of = [](const Shape& s, DType d) {
    return shape_elems(s) * static_cast<int64_t>(dtype_size(d));
  };
  // Last consumer of each producer (graph input = slot 0, layer i = slot i+1).
  size_t n = g.layers.size();
  std::vector<size_t> last_use(n + 1, 0);
  for (size_t i = 0; i < n; ++i) {
    last_use[i] = i;  // producer i feeds layer i at minimum (chain edge)
    if (g.layers[i].type == LayerType::Add)
      last_use[g.layers[i].add().operand + 1] = i;
  }
  std::vector<int64_t> produced(n + 1);
  produced[0] = bytes_of(g.input_shape, g.input_dtype);
  for (size_t i = 0; i < n; ++i) produced[i + 1] = bytes_of(io[i].shape, io[i].dtype);

  int64_t peak = 0;
  for (size_t i = 0; i < n; ++i) {
    int64_t live = produced[i + 1];  // the output being written
    for (size_t src = 0; src <= i; ++src)
      if (last_use[src] >= i) live += produced[src];
    peak = std::max(peak, live);
  }
  int64_t params = 0;
  for (const auto& l : g.layers) {
    if (l.weights) params += static_cast<int64_t>(l.weights->byte_size());
    if (l.bias) params += static_cast<int64_t>(l.bias->byte_size());
  }
  return peak + params;
}

InferResult infer(const Graph& g, const Tensor& input, const KernelResolver& resolver,
                  CaptureMode capture) {
  if (input.shape() != g.input_shape)
    throw Error("input shape " + shape_str(input.shape()) + " does not match graph input " +
                shape_str(g.input_shape));
  if (input.dtype() != g.input_dtype)
    throw Error(std::string("input dtype ") + dtype_name(input.dtype()) +
                " does not match graph input " + dtype_name(g.input_dtype) +
                (g.input_dtype == DType::I8 ? "" : "; quantized graphs start with a Quantize layer"));

  size_t n = g.layers.size();
  InferResult res;
  res.layer_latency_ns.resize(n);
  if (capture == CaptureMode::PerLayer) res.layer_outputs.reserve(n);

  // Keep every output alive only while a later Add still wants it.
  std::vector<size_t> last_use(n + 1, 0);
  for (size_t i = 0; i < n; ++i) {
    last_use[i] = i;
    if (g.layers[i].type == LayerType::Add)
      last_use[g.layers[i].add().operand + 1] = i;
  }
  std::vector<Tensor> kept(n + 1);

  int64_t t0 = now_ns();
  Tensor cur = input;
  for (size_t i = 0; i < n; ++i) {
    const LayerSpec& l = g.layers[i];
    const Tensor* operand = nullptr;
    if (l.type == LayerType::Add) operand = &kept[l.add().operand + 1];
    KernelCtx ctx = resolver.ctx_for(l);
    int repeats = resolver.slow_factor_for(l);

    int64_t t_start = now_ns();
    Tensor out = run_layer(l, resolver.kind, cur, operand, ctx);
    for (int r = 1; r < repeats; ++r)
      out = run_layer(l, resolver.kind, cur, operand, ctx);
    res.layer_latency_ns[i] = now_ns() - t_start;

    if (capture == CaptureMode::PerLayer) res.layer_outputs.push_back(out);
    if (last_use[i + 1] > i) kept[i + 1] = out;
    cur = std::move(out);
  }
  res.total_latency_ns = now_ns() - t0;
  res.output = std::move(cur);
  res.memory_bytes = estimate_memory_bytes(g);
  return res;
}

}  // namespace exray
