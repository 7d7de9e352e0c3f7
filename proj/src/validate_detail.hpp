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

// Helpers shared between the report plumbing and the assertion suite.

#ifndef EXRAY_SRC_VALIDATE_DETAIL_HPP_
#define EXRAY_SRC_VALIDATE_DETAIL_HPP_

#include <vector>

#include "exray/validate.hpp"

namespace exray::detail {

/// First record matching kind+key, nullptr when absent. Throws when the
/// frame holds more than one.
const TraceRecord* find_record(const std::vector<const TraceRecord*>& recs,
                               RecordKind kind, const std::string& key,
                               const std::string& frame_id);

/// LayerOutput records sorted by layer_index.
std::vector<const TraceRecord*> layer_records(const std::vector<const TraceRecord*>& recs);

/// Any tensor as floats: I8/U8 dequantized, I32 cast.
std::vector<float> as_floats(const Tensor& t);

std::string manifest_layer_type(const nlohmann::json& manifest, int layer_index);

std::optional<PipelineSpec> manifest_pipeline(const nlohmann::json& manifest);

}  // namespace exray::detail

#endif  // EXRAY_SRC_VALIDATE_DETAIL_HPP_
