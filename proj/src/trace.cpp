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

#include "exray/trace.hpp"

#include <chrono>
#include <set>

#include "exray/tensor_io.hpp"

namespace exray {

using nlohmann::json;
namespace fs = std::filesystem;

int64_t mono_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

const char* record_kind_name(RecordKind k) {
  switch (k) {
    case RecordKind::Input: return "Input";
    case RecordKind::Output: return "Output";
    case RecordKind::LayerOutput: return "LayerOutput";
    case RecordKind::Latency: return "Latency";
    case RecordKind::Sensor: return "Sensor";
    case RecordKind::Custom: return "Custom";
  }
  throw Error("bad record kind");
}

RecordKind record_kind_from_name(const std::string& s) {
  if (s == "Input") return RecordKind::Input;
  if (s == "Output") return RecordKind::Output;
  if (s == "LayerOutput") return RecordKind::LayerOutput;
  if (s == "Latency") return RecordKind::Latency;
  if (s == "Sensor") return RecordKind::Sensor;
  if (s == "Custom") return RecordKind::Custom;
  throw Error("unknown record kind '" + s + "'");
}

void TraceRecord::validate() const {
  int payloads = blob.has_value() + scalar.has_value() + text.has_value();
  if (payloads != 1)
    throw Error("record " + std::to_string(seq) + ": exactly one of blob/scalar/text required");
  if (frame_id.empty()) throw Error("record " + std::to_string(seq) + ": empty frame_id");
  if (key.empty()) throw Error("record " + std::to_string(seq) + ": empty key");
  if (kind == RecordKind::LayerOutput && !layer_index)
    throw Error("record " + std::to_string(seq) + ": LayerOutput needs layer_index");
  if (kind == RecordKind::Latency && !(t_start_ns && t_end_ns))
    throw Error("record " + std::to_string(seq) + ": Latency needs both timestamps");
}

json record_to_json(const TraceRecord& r) {
  json j;
  j["seq"] = r.seq;
  j["frame_id"] = r.frame_id;
  j["key"] = r.key;
  j["kind"] = record_kind_name(r.kind);
  if (r.layer_index) j["layer_index"] = *r.layer_index;
  if (r.t_start_ns) j["t_start_ns"] = *r.t_start_ns;
  if (r.t_end_ns) j["t_end_ns"] = *r.t_end_ns;
  if (r.blob) j["blob"] = *r.blob;
  if (r.scalar) j["scalar"] = *r.scalar;
  if (r.text) j["text"] = *r.text;
  return j;
}

TraceRecord record_from_json(const json& j) {
  TraceRecord r;
  r.seq = j.at("seq").get<uint64_t>();
  r.frame_id = j.at("frame_id").get<std::string>();
  r.key = j.at("key").get<std::string>();
  r.kind = record_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("layer_index")) r.layer_index = j.at("layer_index").get<int>();
  if (j.contains("t_start_ns")) r.t_start_ns = j.at("t_start_ns").get<int64_t>();
  if (j.contains("t_end_ns")) r.t_end_ns = j.at("t_end_ns").get<int64_t>();
  if (j.contains("blob")) r.blob = j.at("blob").get<std::string>();
  if (j.contains("scalar")) r.scalar = j.at("scalar").get<double>();
  if (j.contains("text")) r.text = j.at("text").get<std::string>();
  r.validate();
  return r;
}

RunMeta make_run_meta(const Graph& g, const PipelineSpec* pipeline,
                      const KernelResolver& resolver, CaptureMode capture,
                      bool reference_run, std::string device) {
  RunMeta m;
  m.device = std::move(device);
  m.reference_run = reference_run;
  m.resolver = resolver.kind;
  m.capture = capture;
  m.model_name = g.name;
  m.model_hash = hex64(model_hash(g));
  m.model_dtype = g.quantized() ? "i8" : "f32";
  for (const auto& l : g.layers) m.layer_types.push_back(layer_type_name(l.type));
  m.weight_min_steps = weight_channel_min_steps(g);
  if (pipeline) m.pipeline = *pipeline;
  for (const auto& f : resolver.faults) m.faults.push_back(fault_to_string(f));
  return m;
}

void MonitorSession::write_manifest(bool complete) {
  json j;
  j["complete"] = complete;
  j["toolkit"] = "exray 0.1.0";
  j["device"] = meta_.device;
  j["reference_run"] = meta_.reference_run;
  j["resolver"] = resolver_name(meta_.resolver);
  j["capture"] = capture_name(meta_.capture);
  j["start_unix_ns"] = wall_anchor_ns_;
  j["start_mono_ns"] = mono_anchor_ns_;
  j["model"]["name"] = meta_.model_name;
  j["model"]["hash"] = meta_.model_hash;
  j["model"]["dtype"] = meta_.model_dtype;
  j["model"]["layer_types"] = meta_.layer_types;
  j["model"]["weight_min_steps"] = meta_.weight_min_steps;
  if (meta_.pipeline) {
    j["pipeline"] = json::parse(pipeline_to_json(*meta_.pipeline));
    j["pipeline_hash"] = hex64(pipeline_hash(*meta_.pipeline));
  } else {
    j["pipeline"] = nullptr;
    j["pipeline_hash"] = nullptr;
  }
  j["faults"] = meta_.faults;
  j["frames"] = frame_count_;
  j["skipped"] = skipped_.size();
  j["skipped_frames"] = skipped_;
  std::ofstream out(dir_ / "manifest.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw Error("cannot write " + (dir_ / "manifest.json").string());
}

MonitorSession MonitorSession::begin(const fs::path& dir, RunMeta meta) {
  fs::create_directories(dir / "blobs");
  MonitorSession s;
  s.dir_ = dir;
  s.meta_ = std::move(meta);
  s.wall_anchor_ns_ = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
  s.mono_anchor_ns_ = mono_now_ns();
  s.records_ = std::make_unique<std::ofstream>(dir / "records.jsonl", std::ios::trunc);
  if (!*s.records_) throw Error("cannot open " + (dir / "records.jsonl").string());
  s.write_manifest(false);
  return s;
}

MonitorSession::~MonitorSession() {
  // A session dropped without finish() leaves complete=false on disk, which
  // is exactly what a crashed run should look like.
  if (records_ && records_->is_open()) records_->flush();
}

TraceRecord MonitorSession::base_record(const std::string& key, RecordKind kind) {
  if (frame_.empty()) throw Error("no frame started; call start_frame first");
  TraceRecord r;
  r.seq = next_seq_++;
  r.frame_id = frame_;
  r.key = key;
  r.kind = kind;
  return r;
}

void MonitorSession::emit(TraceRecord r) {
  r.validate();
  *records_ << record_to_json(r).dump() << "\n";
  if (!*records_) {
    write_manifest(false);
    throw Error("trace write failed in " + dir_.string());
  }
}

std::string MonitorSession::store_blob(const Tensor& t) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06llu.ten",
                static_cast<unsigned long long>(next_blob_++));
  std::string rel = std::string("blobs/") + name;
  write_tensor(dir_ / rel, t);
  return rel;
}

void MonitorSession::start_frame(const std::string& frame_id) {
  if (finished_) throw Error("session already finished");
  if (frame_id.empty()) throw Error("empty frame id");
  if (inf_start_) throw Error("frame started while inference is open");
  frame_ = frame_id;
  ++frame_count_;
}

void MonitorSession::on_inf_start() {
  if (frame_.empty()) throw Error("no frame started; call start_frame first");
  if (inf_start_) throw Error("on_inf_start called twice");
  inf_start_ = mono_now_ns();
}

void MonitorSession::on_inf_stop(const InferResult& result) {
  if (!inf_start_) throw Error("on_inf_stop without on_inf_start");
  int64_t t_end = mono_now_ns();

  TraceRecord lat = base_record("inference", RecordKind::Latency);
  lat.t_start_ns = *inf_start_;
  lat.t_end_ns = t_end;
  lat.scalar = static_cast<double>(t_end - *inf_start_);
  emit(std::move(lat));
  inf_start_.reset();

  TraceRecord out = base_record("output", RecordKind::Output);
  out.blob = store_blob(result.output);
  emit(std::move(out));

  for (size_t i = 0; i < result.layer_outputs.size(); ++i) {
    TraceRecord lr = base_record("layer_output", RecordKind::LayerOutput);
    lr.layer_index = static_cast<int>(i);
    lr.blob = store_blob(result.layer_outputs[i]);
    emit(std::move(lr));
  }

  json lat_arr = result.layer_latency_ns;
  TraceRecord ll = base_record("layer_latency_ns", RecordKind::Custom);
  ll.text = lat_arr.dump();
  emit(std::move(ll));

  TraceRecord mem = base_record("memory_bytes", RecordKind::Custom);
  mem.scalar = static_cast<double>(result.memory_bytes);
  emit(std::move(mem));
}

void MonitorSession::on_sensor_stop() {
  if (sensor_quiet_start_) throw Error("on_sensor_stop called twice");
  sensor_quiet_start_ = mono_now_ns();
}

void MonitorSession::on_sensor_start() {
  if (!sensor_quiet_start_) throw Error("on_sensor_start without on_sensor_stop");
  int64_t t_end = mono_now_ns();
  TraceRecord r = base_record("sensor_quiet_ns", RecordKind::Sensor);
  r.t_start_ns = *sensor_quiet_start_;
  r.t_end_ns = t_end;
  r.scalar = static_cast<double>(t_end - *sensor_quiet_start_);
  sensor_quiet_start_.reset();
  emit(std::move(r));
}

void MonitorSession::log_input(const std::string& key, const Tensor& t) {
  TraceRecord r = base_record(key, RecordKind::Input);
  r.blob = store_blob(t);
  emit(std::move(r));
}

void MonitorSession::log_custom(const std::string& key, const Tensor& t) {
  TraceRecord r = base_record(key, RecordKind::Custom);
  r.blob = store_blob(t);
  emit(std::move(r));
}

void MonitorSession::log_custom(const std::string& key, double scalar) {
  TraceRecord r = base_record(key, RecordKind::Custom);
  r.scalar = scalar;
  emit(std::move(r));
}

void MonitorSession::log_custom(const std::string& key, const std::string& text) {
  TraceRecord r = base_record(key, RecordKind::Custom);
  r.text = text;
  emit(std::move(r));
}

void MonitorSession::log_sensor(const std::string& key, double scalar) {
  TraceRecord r = base_record(key, RecordKind::Sensor);
  r.scalar = scalar;
  emit(std::move(r));
}

void MonitorSession::note_skip(const std::string& frame_id, const std::string& reason) {
  skipped_[frame_id] = reason;
}

void MonitorSession::finish() {
  if (finished_) return;
  if (inf_start_) throw Error("finish with inference still open");
  records_->flush();
  if (!*records_) throw Error("trace write failed in " + dir_.string());
  finished_ = true;
  write_manifest(true);
}

Tensor TraceData::load_blob(const TraceRecord& r) const {
  if (!r.blob) throw Error("record " + std::to_string(r.seq) + " has no blob");
  return read_tensor(dir / *r.blob);
}

std::vector<std::pair<std::string, std::vector<const TraceRecord*>>> TraceData::frames() const {
  std::vector<std::pair<std::string, std::vector<const TraceRecord*>>> out;
  std::map<std::string, size_t> at;
  for (const auto& r : records) {
    auto it = at.find(r.frame_id);
    if (it == at.end()) {
      at.emplace(r.frame_id, out.size());
      out.push_back({r.frame_id, {&r}});
    } else {
      out[it->second].second.push_back(&r);
    }
  }
  return out;
}

TraceData read_trace(const fs::path& dir) {
  TraceData t;
  t.dir = dir;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw Error("cannot open " + (dir / "manifest.json").string());
  try {
    t.manifest = json::parse(mf);
  } catch (const json::parse_error& e) {
    throw Error((dir / "manifest.json").string() + ": " + e.what());
  }

  std::ifstream rf(dir / "records.jsonl");
  if (!rf) throw Error("cannot open " + (dir / "records.jsonl").string());
  std::string line;
  int lineno = 0;
  std::set<std::string> blobs_seen;
  int64_t prev_seq = -1;
  while (std::getline(rf, line)) {
    ++lineno;
    if (line.empty()) continue;
    TraceRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw Error((dir / "records.jsonl").string() + " line " + std::to_string(lineno) + ": " +
                  e.what());
    }
    if (static_cast<int64_t>(r.seq) <= prev_seq)
      throw Error((dir / "records.jsonl").string() + " line " + std::to_string(lineno) +
                  ": seq not strictly increasing");
    prev_seq = static_cast<int64_t>(r.seq);
    if (r.blob) {
      if (!blobs_seen.insert(*r.blob).second)
        throw Error((dir / "records.jsonl").string() + " line " + std::to_string(lineno) +
                    ": blob referenced twice: " + *r.blob);
      if (!fs::exists(dir / *r.blob))
        throw Error("missing blob " + (dir / *r.blob).string());
    }
    t.records.push_back(std::move(r));
  }
  return t;
}

}  // namespace exray
