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

#ifndef EXRAY_COMMON_HPP_
#define EXRAY_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace exray {

/// Toolkit-wide error type. Messages carry enough context (path, layer,
/// element index) to act on without a debugger.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rounding rule used by every quantizer and resizer in the toolkit:
/// round half away from zero (1.5 -> 2, -1.5 -> -2).
inline double round_half_away(double v) { return std::round(v); }

inline int64_t round_to_i64(double v) {
  return static_cast<int64_t>(std::llround(v));
}

/// FNV-1a 64-bit, used for the model / pipeline hashes in trace manifests.
/// Pass a previous result as `seed` to chain several buffers.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

/// Worker cap for frame-parallel sections. Honors EXRAY_THREADS when set,
/// otherwise hardware concurrency.
int thread_cap();

/// Runs fn(i) for i in [0, n) across up to thread_cap() workers. Exceptions
/// from workers are rethrown on the calling thread.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace exray

#endif  // EXRAY_COMMON_HPP_
