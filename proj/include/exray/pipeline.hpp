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

#ifndef EXRAY_PIPELINE_HPP_
#define EXRAY_PIPELINE_HPP_

#include <filesystem>
#include <string>

#include "exray/image.hpp"
#include "exray/tensor.hpp"

namespace exray {

enum class Resizer { Bilinear, Area };

const char* resizer_name(Resizer r);
Resizer resizer_from_name(const std::string& s);

/// Preprocessing recipe applied to every captured frame before inference.
/// Stages always run in the same order: rotate, channel order, resize,
/// normalize.
struct PipelineSpec {
  int rotation = 0;  // clockwise degrees, multiple of 90
  ChannelOrder channel_order = ChannelOrder::RGB;
  Resizer resizer = Resizer::Bilinear;
  int target_h = 0;
  int target_w = 0;
  double norm_lo = 0.0;
  double norm_hi = 1.0;

  bool operator==(const PipelineSpec&) const = default;
  void validate() const;
};

std::string pipeline_to_json(const PipelineSpec& spec);
PipelineSpec pipeline_from_json(const std::string& text);
PipelineSpec load_pipeline(const std::filesystem::path& path);
void save_pipeline(const std::filesystem::path& path, const PipelineSpec& spec);

/// Hash of the canonical JSON form; traces record it so replay can refuse
/// mismatched recipes.
uint64_t pipeline_hash(const PipelineSpec& spec);

/// Linear map of u8 values onto [lo, hi]: v = u / 255 * (hi - lo) + lo.
Tensor normalize_image(const Image& img, double lo, double hi);

/// Full recipe: returns the f32 model input [h, w, c].
Tensor run_pipeline(const Image& raw, const PipelineSpec& spec);

}  // namespace exray

#endif  // EXRAY_PIPELINE_HPP_
