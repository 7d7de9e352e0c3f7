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

#ifndef EXRAY_TRACE_HPP_
#define EXRAY_TRACE_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>

#include <nlohmann/json.hpp>

#include "exray/pipeline.hpp"
#include "exray/runtime.hpp"

namespace exray {

// A trace directory is the contract between edge runs, replay runs, and the
// validator:
//   manifest.json    run metadata; "complete" flips true only on finish()
//   records.jsonl    one JSON record per line, seq strictly increasing
//   blobs/NNNNNN.ten tensor payloads, each referenced by exactly one record
enum class RecordKind { Input, Output, LayerOutput, Latency, Sensor, Custom };

const char* record_kind_name(RecordKind k);
RecordKind record_kind_from_name(const std::string& s);

struct TraceRecord {
  uint64_t seq = 0;
  std::string frame_id;
  std::string key;
  RecordKind kind = RecordKind::Custom;
  std::optional<int> layer_index;
  std::optional<int64_t> t_start_ns;  // monotonic clock
  std::optional<int64_t> t_end_ns;
  std::optional<std::string> blob;  // path relative to the trace dir
  std::optional<double> scalar;
  std::optional<std::string> text;

  /// Exactly one of blob/scalar/text; LayerOutput needs layer_index;
  /// Latency needs both timestamps.
  void validate() const;
  bool operator==(const TraceRecord&) const = default;
};

nlohmann::json record_to_json(const TraceRecord& r);
TraceRecord record_from_json(const nlohmann::json& j);

/// Run metadata frozen into the manifest at session start.
struct RunMeta {
  std::string device = "host";
  bool reference_run = false;
  ResolverKind resolver = ResolverKind::Reference;
  CaptureMode capture = CaptureMode::OutputOnly;
  std::string model_name;
  std::string model_hash;
  std::string model_dtype;
  std::vector<std::string> layer_types;
  std::vector<double> weight_min_steps;  // per layer, -1 where not applicable
  std::optional<PipelineSpec> pipeline;
  std::vector<std::string> faults;
};

RunMeta make_run_meta(const Graph& g, const PipelineSpec* pipeline,
                      const KernelResolver& resolver, CaptureMode capture,
                      bool reference_run, std::string device = "host");

/// Single-writer instrumentation session. All hooks must run on one thread;
/// separate sessions to separate directories may run concurrently.
class MonitorSession {
 public:
  static MonitorSession begin(const std::filesystem::path& dir, RunMeta meta);
  MonitorSession(MonitorSession&&) = default;
  MonitorSession& operator=(MonitorSession&&) = default;
  ~MonitorSession();

  void start_frame(const std::string& frame_id);

  void on_inf_start();
  /// Emits the inference Latency record, the Output record, per-layer
  /// outputs when capture is PerLayer, the per-layer latency array, and the
  /// analytic memory figure.
  void on_inf_stop(const InferResult& result);

  /// Sensors pause before inference (stop) and resume after (start); the
  /// bracket emits one Sensor record covering the quiet window.
  void on_sensor_stop();
  void on_sensor_start();

  void log_input(const std::string& key, const Tensor& t);
  void log_custom(const std::string& key, const Tensor& t);
  void log_custom(const std::string& key, double scalar);
  void log_custom(const std::string& key, const std::string& text);
  void log_sensor(const std::string& key, double scalar);

  /// Frame abandoned (e.g. unreadable input); counted in the manifest.
  void note_skip(const std::string& frame_id, const std::string& reason);

  /// Marks the manifest complete. Without this the trace stays flagged
  /// partial, which is the crash story.
  void finish();

  int frames() const { return frame_count_; }

 private:
  MonitorSession() = default;
  TraceRecord base_record(const std::string& key, RecordKind kind);
  void emit(TraceRecord r);
  std::string store_blob(const Tensor& t);
  void write_manifest(bool complete);

  std::filesystem::path dir_;
  RunMeta meta_;
  std::unique_ptr<std::ofstream> records_;
  uint64_t next_seq_ = 0;
  uint64_t next_blob_ = 0;
  std::string frame_;
  int frame_count_ = 0;
  std::map<std::string, std::string> skipped_;
  std::optional<int64_t> inf_start_;
  std::optional<int64_t> sensor_quiet_start_;
  int64_t wall_anchor_ns_ = 0;
  int64_t mono_anchor_ns_ = 0;
  bool finished_ = false;
};

/// A fully read and validated trace.
struct TraceData {
  std::filesystem::path dir;
  nlohmann::json manifest;
  std::vector<TraceRecord> records;

  Tensor load_blob(const TraceRecord& r) const;
  /// frame_id -> records of that frame, in seq order; insertion order
  /// follows first appearance.
  std::vector<std::pair<std::string, std::vector<const TraceRecord*>>> frames() const;
};

TraceData read_trace(const std::filesystem::path& dir);

int64_t mono_now_ns();

}  // namespace exray

#endif  // EXRAY_TRACE_HPP_
