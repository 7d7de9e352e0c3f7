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

#ifndef EXRAY_REPLAY_HPP_
#define EXRAY_REPLAY_HPP_

#include "exray/trace.hpp"

namespace exray {

struct RunStats {
  int frames = 0;
  int skipped = 0;
};

struct PlaybackOptions {
  KernelResolver resolver;
  CaptureMode capture = CaptureMode::OutputOnly;
  std::string device = "host";
  bool reference_run = false;
};

/// Runs every .ppm in `input_dir` (lexicographic order) through the pipeline
/// and graph, producing a trace with one frame per image. frame_id is the
/// file stem. The raw image is always logged; this is what later makes
/// resize/rotation questions answerable from data alone. The labels file
/// holds `<filename> <class_index>` lines; labels land as Custom "label"
/// records, unknown names are ignored with a note.
RunStats playback_dataset(const std::filesystem::path& input_dir,
                          const std::optional<std::filesystem::path>& labels_file,
                          const Graph& g, const PipelineSpec& pipeline,
                          const PlaybackOptions& opts,
                          const std::filesystem::path& out_dir);

struct ReplayOptions {
  CaptureMode capture = CaptureMode::OutputOnly;
  /// Replaying through a quantized graph mixes quantization error into the
  /// baseline, so it must be asked for explicitly.
  bool allow_int8 = false;
  std::string device = "host";
};

/// Plays the raw inputs logged in `edge_trace` back through a trusted
/// pipeline and graph with the Reference resolver, emitting a reference
/// trace with matching frame_ids. Frames without a raw input are skipped
/// and counted.
RunStats replay(const TraceData& edge_trace, const Graph& ref_graph,
                const PipelineSpec& ref_pipeline, const ReplayOptions& opts,
                const std::filesystem::path& out_dir);

/// Parses a `<filename> <class_index>` per line label file. '#' comments and
/// blank lines are skipped.
std::map<std::string, int> load_label_file(const std::filesystem::path& path);

}  // namespace exray

#endif  // EXRAY_REPLAY_HPP_
