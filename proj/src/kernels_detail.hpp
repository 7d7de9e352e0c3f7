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

// Shared arithmetic for the kernel translation units. Int8 layers follow one
// scheme throughout: exact wide accumulation of q_in * q_w products, a single
// i32 saturation (or wrap, under fault), then requantization by the real
// multiplier s_in * s_w / s_out. The narrow-accumulator fault instead
// saturates per add in i16, in the loop order of whichever kernel runs.

#ifndef EXRAY_SRC_KERNELS_DETAIL_HPP_
#define EXRAY_SRC_KERNELS_DETAIL_HPP_

#include <algorithm>
#include <cmath>

#include "exray/common.hpp"
#include "exray/kernels.hpp"
#include "exray/quant.hpp"

namespace exray {
namespace kdetail {

inline int64_t sat32(int64_t v) {
  return std::clamp<int64_t>(v, INT32_MIN, INT32_MAX);
}

inline int64_t wrap32(int64_t v) {
  return static_cast<int32_t>(static_cast<uint32_t>(static_cast<uint64_t>(v)));
}

inline int64_t sat16(int64_t v) { return std::clamp<int64_t>(v, INT16_MIN, INT16_MAX); }

/// Final accumulator value from the exact i64 sum (narrow is handled in-loop
/// by the kernels because it is order-dependent by design).
inline int64_t settle_acc(int64_t exact, const KernelCtx& ctx) {
  return ctx.wrap_acc ? wrap32(exact) : sat32(exact);
}

/// Quantized clamp window for a fused activation at output scale s_out.
inline std::pair<int, int> act_range_q(Activation a, double s_out) {
  switch (a) {
    case Activation::None: return {-kSymmetricMax, kSymmetricMax};
    case Activation::ReLU: return {0, kSymmetricMax};
    case Activation::ReLU6:
      return {0, static_cast<int>(std::min<int64_t>(kSymmetricMax, round_to_i64(6.0 / s_out)))};
  }
  throw Error("bad activation");
}

inline double act_apply_f(Activation a, double x) {
  switch (a) {
    case Activation::None: return x;
    case Activation::ReLU: return std::max(0.0, x);
    case Activation::ReLU6: return std::clamp(x, 0.0, 6.0);
  }
  throw Error("bad activation");
}

/// acc -> q: scale by the real multiplier, round (or truncate toward zero
/// under fault), clamp to the activation window.
struct Requant {
  double mult = 1.0;
  bool trunc = false;
  int lo = -kSymmetricMax;
  int hi = kSymmetricMax;

  int8_t from_scaled(double real) const {
    int64_t q = trunc ? static_cast<int64_t>(std::trunc(real)) : round_to_i64(real);
    return static_cast<int8_t>(std::clamp<int64_t>(q, lo, hi));
  }
  int8_t operator()(int64_t acc) const { return from_scaled(static_cast<double>(acc) * mult); }
};

inline double tensor_scale(const Tensor& t) { return t.quant()->scale[0]; }

inline double weight_scale(const QuantParams& wq, int64_t oc) {
  return wq.per_channel() ? wq.scale[oc] : wq.scale[0];
}

}  // namespace kdetail
}  // namespace exray

#endif  // EXRAY_SRC_KERNELS_DETAIL_HPP_
