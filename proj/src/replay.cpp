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

#include "exray/replay.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "exray/image.hpp"

namespace exray {

namespace fs = std::filesystem;

std::map<std::string, int> load_label_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::map<std::string, int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    int cls;
    if (!(ss >> name >> cls))
      throw Error(path.string() + " line " + std::to_string(lineno) +
                  ": want '<filename> <class_index>'");
    labels[name] = cls;
  }
  return labels;
}

namespace {

// One frame of work shared by playback and replay.
void run_frame(MonitorSession& session, const std::string& frame_id, const Image& raw,
               const Graph& g, const PipelineSpec& pipeline, const KernelResolver& resolver,
               CaptureMode capture, std::optional<int> label) {
  session.start_frame(frame_id);
  session.log_input("raw_input", image_to_tensor(raw));
  Tensor model_input = run_pipeline(raw, pipeline);
  session.log_input("model_input", model_input);
  session.on_sensor_stop();
  session.on_inf_start();
  InferResult result = infer(g, model_input, resolver, capture);
  session.on_inf_stop(result);
  session.on_sensor_start();
  if (label) session.log_custom("label", static_cast<double>(*label));
}

}  // namespace

RunStats playback_dataset(const fs::path& input_dir,
                          const std::optional<fs::path>& labels_file, const Graph& g,
                          const PipelineSpec& pipeline, const PlaybackOptions& opts,
                          const fs::path& out_dir) {
  if (!fs::is_directory(input_dir)) throw Error(input_dir.string() + " is not a directory");
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(input_dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") images.push_back(e.path());
  std::sort(images.begin(), images.end());

  std::map<std::string, int> labels;
  if (labels_file) labels = load_label_file(*labels_file);

  MonitorSession session = MonitorSession::begin(
      out_dir, make_run_meta(g, &pipeline, opts.resolver, opts.capture, opts.reference_run,
                             opts.device));
  std::set<std::string> named;
  RunStats stats;
  for (const auto& img_path : images) {
    std::string frame_id = img_path.stem().string();
    Image raw;
    try {
      raw = load_ppm(img_path);
    } catch (const Error& e) {
      session.note_skip(frame_id, e.what());
      ++stats.skipped;
      continue;
    }
    std::optional<int> label;
    auto it = labels.find(img_path.filename().string());
    if (it == labels.end()) it = labels.find(frame_id);
    if (it != labels.end()) {
      label = it->second;
      named.insert(it->first);
    }
    run_frame(session, frame_id, raw, g, pipeline, opts.resolver, opts.capture, label);
    ++stats.frames;
  }
  for (const auto& [name, cls] : labels)
    if (!named.count(name))
      std::fprintf(stderr, "warning: label for unknown image '%s' ignored\n", name.c_str());
  session.finish();
  return stats;
}

RunStats replay(const TraceData& edge_trace, const Graph& ref_graph,
                const PipelineSpec& ref_pipeline, const ReplayOptions& opts,
                const fs::path& out_dir) {
  if (ref_graph.quantized() && !opts.allow_int8)
    throw Error(
        "replay graph is quantized; pass the int8 flag if mixing quantization "
        "error into the baseline is intended");
  KernelResolver resolver{ResolverKind::Reference, {}};
  MonitorSession session = MonitorSession::begin(
      out_dir, make_run_meta(ref_graph, &ref_pipeline, resolver, opts.capture,
                             /*reference_run=*/true, opts.device));
  RunStats stats;
  for (const auto& [frame_id, records] : edge_trace.frames()) {
    const TraceRecord* raw_rec = nullptr;
    for (const TraceRecord* r : records)
      if (r->kind == RecordKind::Input && r->key == "raw_input") raw_rec = r;
    if (!raw_rec) {
      session.note_skip(frame_id, "no raw_input record");
      ++stats.skipped;
      continue;
    }
    Image raw;
    try {
      raw = image_from_tensor(edge_trace.load_blob(*raw_rec));
    } catch (const Error& e) {
      session.note_skip(frame_id, e.what());
      ++stats.skipped;
      continue;
    }
    run_frame(session, frame_id, raw, ref_graph, ref_pipeline, resolver, opts.capture,
              std::nullopt);
    ++stats.frames;
  }
  session.finish();
  return stats;
}

}  // namespace exray
