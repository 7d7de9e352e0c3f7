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

#include "exray/validate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "exray/quant.hpp"
#include "validate_detail.hpp"

namespace exray {

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

const TraceRecord* find_record(const std::vector<const TraceRecord*>& recs,
                               RecordKind kind, const std::string& key,
                               const std::string& frame_id) {
  const TraceRecord* hit = nullptr;
  for (const TraceRecord* r : recs) {
    if (r->kind != kind || r->key != key) continue;
    if (hit)
      throw Error("frame '" + frame_id + "' has more than one '" + key + "' record");
    hit = r;
  }
  return hit;
}

std::vector<const TraceRecord*> layer_records(const std::vector<const TraceRecord*>& recs) {
  std::vector<const TraceRecord*> out;
  for (const TraceRecord* r : recs)
    if (r->kind == RecordKind::LayerOutput) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const TraceRecord* a, const TraceRecord* b) {
    return *a->layer_index < *b->layer_index;
  });
  return out;
}

std::vector<float> as_floats(const Tensor& t) {
  switch (t.dtype()) {
    case DType::F32: {
      auto s = t.f32();
      return {s.begin(), s.end()};
    }
    case DType::I32: {
      auto s = t.i32();
      std::vector<float> out(s.size());
      for (size_t i = 0; i < s.size(); ++i) out[i] = static_cast<float>(s[i]);
      return out;
    }
    default: {
      Tensor f = dequantize(t);
      auto s = f.f32();
      return {s.begin(), s.end()};
    }
  }
}

std::string manifest_layer_type(const json& manifest, int layer_index) {
  if (manifest.contains("model")) {
    const json& m = manifest["model"];
    if (m.contains("layer_types") && m["layer_types"].is_array() &&
        layer_index >= 0 && layer_index < static_cast<int>(m["layer_types"].size()))
      return m["layer_types"][layer_index].get<std::string>();
  }
  return "?";
}

std::optional<PipelineSpec> manifest_pipeline(const json& manifest) {
  if (!manifest.contains("pipeline") || manifest["pipeline"].is_null()) return std::nullopt;
  return pipeline_from_json(manifest["pipeline"].dump());
}

}  // namespace detail

namespace {

using detail::as_floats;
using detail::find_record;
using detail::layer_records;

json json_num(double v) {
  if (std::isfinite(v)) return json(v);
  return json(v > 0 ? "inf" : "-inf");
}

int argmax_of(const std::vector<float>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

// Pooled accumulator for one layer (or the model input) over all frames.
struct PoolAccum {
  double sq = 0.0;
  size_t n = 0;
  double ref_min = std::numeric_limits<double>::infinity();
  double ref_max = -std::numeric_limits<double>::infinity();

  void add(const std::vector<float>& e, const std::vector<float>& r) {
    for (size_t i = 0; i < e.size(); ++i) {
      double d = static_cast<double>(e[i]) - static_cast<double>(r[i]);
      sq += d * d;
      ref_min = std::min(ref_min, static_cast<double>(r[i]));
      ref_max = std::max(ref_max, static_cast<double>(r[i]));
    }
    n += e.size();
  }
  void merge(const PoolAccum& o) {
    sq += o.sq;
    n += o.n;
    ref_min = std::min(ref_min, o.ref_min);
    ref_max = std::max(ref_max, o.ref_max);
  }
  void finish(LayerDivergence& d) const {
    d.rmse = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    d.scale = n ? ref_max - ref_min : 0.0;
    if (d.scale > 0) {
      d.rmse_hat = d.rmse / d.scale;
    } else {
      d.degenerate = true;
      d.rmse_hat = 0.0;
    }
  }
};

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += "'";
  return out;
}

}  // namespace

Alignment align(const TraceData& edge, const TraceData& ref) {
  auto ef = edge.frames();
  auto rf = ref.frames();
  auto dup_check = [](const auto& frames, const char* which) {
    for (const auto& [id, recs] : frames) {
      int outs = 0;
      for (const TraceRecord* r : recs)
        if (r->kind == RecordKind::Output) ++outs;
      if (outs > 1)
        throw Error("frame '" + id + "' has " + std::to_string(outs) +
                    " output records in the " + which + " trace");
    }
  };
  dup_check(ef, "edge");
  dup_check(rf, "reference");

  std::map<std::string, const std::vector<const TraceRecord*>*> rmap;
  for (const auto& [id, recs] : rf) rmap[id] = &recs;

  Alignment al;
  std::set<std::string> matched;
  for (const auto& [id, recs] : ef) {
    auto it = rmap.find(id);
    if (it == rmap.end()) {
      al.edge_only.push_back(id);
      continue;
    }
    matched.insert(id);
    al.pairs.push_back({id, recs, *it->second});
  }
  for (const auto& [id, recs] : rf)
    if (!matched.count(id)) al.ref_only.push_back(id);
  if (al.pairs.empty()) throw Error("no overlapping frame ids between the two traces");
  return al;
}

AccuracySummary accuracy_check(const TraceData& edge, const TraceData& ref,
                               const Alignment& al,
                               const std::map<std::string, int>* labels) {
  // Labels keyed by filename; frame ids are stems, so index both.
  std::map<std::string, int> by_stem;
  if (labels)
    for (const auto& [name, cls] : *labels) by_stem[fs::path(name).stem().string()] = cls;

  AccuracySummary s;
  int agree = 0, edge_ok = 0, ref_ok = 0, labeled = 0;
  for (const auto& p : al.pairs) {
    const TraceRecord* eo = find_record(p.edge, RecordKind::Output, "output", p.frame_id);
    const TraceRecord* ro = find_record(p.ref, RecordKind::Output, "output", p.frame_id);
    if (!eo || !ro)
      throw Error("frame '" + p.frame_id + "' lacks an output record");
    int ea = argmax_of(as_floats(edge.load_blob(*eo)));
    int ra = argmax_of(as_floats(ref.load_blob(*ro)));
    if (ea == ra) ++agree;

    std::optional<int> label;
    if (labels) {
      auto it = labels->find(p.frame_id);
      if (it != labels->end()) {
        label = it->second;
      } else {
        auto it2 = by_stem.find(p.frame_id);
        if (it2 != by_stem.end()) label = it2->second;
      }
    }
    if (!label) {
      // playback embeds dataset labels as Custom records
      const TraceRecord* lr = find_record(p.edge, RecordKind::Custom, "label", p.frame_id);
      if (!lr) lr = find_record(p.ref, RecordKind::Custom, "label", p.frame_id);
      if (lr && lr->scalar) label = static_cast<int>(*lr->scalar);
    }
    if (label) {
      ++labeled;
      if (ea == *label) ++edge_ok;
      if (ra == *label) ++ref_ok;
    }
  }
  s.frames = static_cast<int>(al.pairs.size());
  s.agreement = s.frames ? static_cast<double>(agree) / s.frames : 1.0;
  if (labeled) {
    s.edge_top1 = static_cast<double>(edge_ok) / labeled;
    s.ref_top1 = static_cast<double>(ref_ok) / labeled;
  }
  return s;
}

std::optional<LayerDivergence> input_divergence(const TraceData& edge, const TraceData& ref,
                                                const Alignment& al) {
  PoolAccum acc;
  bool any = false, shape_mismatch = false;
  for (const auto& p : al.pairs) {
    const TraceRecord* ei = find_record(p.edge, RecordKind::Input, "model_input", p.frame_id);
    const TraceRecord* ri = find_record(p.ref, RecordKind::Input, "model_input", p.frame_id);
    if (!ei || !ri) continue;
    Tensor e = edge.load_blob(*ei);
    Tensor r = ref.load_blob(*ri);
    any = true;
    if (e.shape() != r.shape()) {
      shape_mismatch = true;
      continue;
    }
    acc.add(as_floats(e), as_floats(r));
  }
  if (!any) return std::nullopt;
  LayerDivergence d;
  d.layer_index = -1;
  d.layer_type = "input";
  if (shape_mismatch) {
    // Not comparable at all; that is as diverged as inputs get.
    d.rmse = d.rmse_hat = std::numeric_limits<double>::infinity();
    return d;
  }
  acc.finish(d);
  return d;
}

std::vector<LayerDivergence> per_layer_rmse(const TraceData& edge, const TraceData& ref,
                                            const Alignment& al) {
  size_t pairs = al.pairs.size();
  std::vector<std::vector<PoolAccum>> partial(pairs);
  std::vector<std::vector<int>> indices(pairs);
  parallel_for(static_cast<int64_t>(pairs), [&](int64_t i) {
    const FramePair& p = al.pairs[i];
    auto el = layer_records(p.edge);
    auto rl = layer_records(p.ref);
    if (el.size() != rl.size())
      throw StructuralError("frame '" + p.frame_id + "': edge logged " +
                            std::to_string(el.size()) + " layer outputs, reference logged " +
                            std::to_string(rl.size()));
    partial[i].resize(el.size());
    for (size_t l = 0; l < el.size(); ++l) {
      if (*el[l]->layer_index != *rl[l]->layer_index)
        throw StructuralError("frame '" + p.frame_id + "': layer index mismatch at position " +
                              std::to_string(l));
      indices[i].push_back(static_cast<int>(*el[l]->layer_index));
      Tensor e = edge.load_blob(*el[l]);
      Tensor r = ref.load_blob(*rl[l]);
      if (e.shape() != r.shape())
        throw StructuralError("frame '" + p.frame_id + "' layer " +
                              std::to_string(*el[l]->layer_index) + ": shape " +
                              shape_str(e.shape()) + " vs " + shape_str(r.shape()));
      partial[i][l].add(as_floats(e), as_floats(r));
    }
  });

  size_t layers = 0;
  const std::vector<int>* index_row = nullptr;
  for (size_t i = 0; i < pairs; ++i) {
    if (partial[i].empty()) continue;
    if (layers == 0) {
      layers = partial[i].size();
      index_row = &indices[i];
    } else if (partial[i].size() != layers || indices[i] != *index_row) {
      throw StructuralError("frames disagree on the set of captured layers");
    }
  }
  if (layers == 0) return {};

  std::vector<LayerDivergence> out(layers);
  for (size_t l = 0; l < layers; ++l) {
    PoolAccum acc;
    for (const auto& pt : partial)
      if (!pt.empty()) acc.merge(pt[l]);
    out[l].layer_index = (*index_row)[l];
    out[l].layer_type = detail::manifest_layer_type(edge.manifest, out[l].layer_index);
    acc.finish(out[l]);
  }
  return out;
}

DivergenceVerdict localize_divergence(const std::optional<LayerDivergence>& input,
                                      const std::vector<LayerDivergence>& series,
                                      double jump_delta, double jump_ratio) {
  // A degenerate layer (flat reference) with any drift at all can't be
  // ranked by rmse_hat; treat it as unambiguously diverged.
  auto eff = [](const LayerDivergence& d) {
    if (d.degenerate) return d.rmse > 1e-12 ? std::numeric_limits<double>::infinity() : 0.0;
    return d.rmse_hat;
  };
  DivergenceVerdict v;
  if (input && eff(*input) >= jump_delta) {
    v.preprocessing = true;
    return v;
  }
  double prior = 0.0;  // running max over earlier layers only
  for (const LayerDivergence& d : series) {
    double rh = eff(d);
    if (rh - prior >= jump_delta || (prior >= 1e-6 && rh >= jump_ratio * prior)) {
      v.layer = d.layer_index;
      return v;
    }
    prior = std::max(prior, rh);
  }
  return v;
}

LatencySummary latency_report(const TraceData& edge, const TraceData& ref,
                              const Alignment& al, double straggler_factor,
                              double straggler_min_share) {
  std::vector<int64_t> esum, rsum;
  auto gather = [](const std::vector<const TraceRecord*>& recs, const std::string& id,
                   std::vector<int64_t>& sum) {
    const TraceRecord* r = find_record(recs, RecordKind::Custom, "layer_latency_ns", id);
    if (!r || !r->text) return;
    json a = json::parse(*r->text);
    if (sum.empty()) sum.assign(a.size(), 0);
    if (sum.size() != a.size())
      throw Error("frame '" + id + "': layer latency array length changed mid-trace");
    for (size_t i = 0; i < a.size(); ++i) sum[i] += a[i].get<int64_t>();
  };
  for (const auto& p : al.pairs) {
    gather(p.edge, p.frame_id, esum);
    gather(p.ref, p.frame_id, rsum);
  }

  LatencySummary s;
  std::map<std::string, size_t> row_of;
  auto add_row = [&](const std::string& type) -> LatencyTypeRow& {
    auto it = row_of.find(type);
    if (it == row_of.end()) {
      row_of[type] = s.by_type.size();
      s.by_type.push_back({type, 0, 0});
      return s.by_type.back();
    }
    return s.by_type[it->second];
  };
  for (size_t i = 0; i < esum.size(); ++i) {
    add_row(detail::manifest_layer_type(edge.manifest, static_cast<int>(i))).edge_ns += esum[i];
    s.edge_total_ns += esum[i];
  }
  for (size_t i = 0; i < rsum.size(); ++i) {
    add_row(detail::manifest_layer_type(ref.manifest, static_cast<int>(i))).ref_ns += rsum[i];
    s.ref_total_ns += rsum[i];
  }

  // Stragglers compare like with like, so both sides need the same layers.
  if (!esum.empty() && esum.size() == rsum.size() && s.edge_total_ns > 0 && s.ref_total_ns > 0) {
    for (size_t i = 0; i < esum.size(); ++i) {
      double es = static_cast<double>(esum[i]) / static_cast<double>(s.edge_total_ns);
      double rs = static_cast<double>(rsum[i]) / static_cast<double>(s.ref_total_ns);
      if (es < straggler_min_share) continue;
      double f = es / std::max(rs, 1e-12);
      if (f >= straggler_factor)
        s.stragglers.push_back({static_cast<int>(i),
                                detail::manifest_layer_type(edge.manifest, static_cast<int>(i)),
                                es, rs, f});
    }
  }
  return s;
}

AssertionResult run_external_assertion(const fs::path& exe, const TraceData& edge,
                                       const TraceData& ref, const Alignment& al) {
  AssertionResult res;
  res.name = exe.stem().string();

  static std::atomic<uint64_t> counter{0};
  fs::path frames_file =
      fs::temp_directory_path() /
      ("exray_frames_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".txt");
  {
    std::ofstream out(frames_file);
    for (const auto& p : al.pairs) out << p.frame_id << "\n";
  }

  std::string cmd = shell_quote(exe.string()) + " " + shell_quote(edge.dir.string()) + " " +
                    shell_quote(ref.dir.string()) + " < " + shell_quote(frames_file.string());
  std::string output;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    fs::remove(frames_file);
    res.verdict = "error";
    res.evidence = "could not start " + exe.string();
    return res;
  }
  char buf[4096];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
  int rc = ::pclose(pipe);
  fs::remove(frames_file);

  if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
    res.verdict = "error";
    res.evidence = WIFEXITED(rc) ? "exited with status " + std::to_string(WEXITSTATUS(rc))
                                 : "terminated abnormally";
    return res;
  }
  json j = json::parse(output, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("verdict") ||
      !j["verdict"].is_string()) {
    res.verdict = "error";
    res.evidence = "did not print a JSON verdict";
    return res;
  }
  std::string verdict = j["verdict"].get<std::string>();
  if (verdict != "pass" && verdict != "fail" && verdict != "inapplicable") {
    res.verdict = "error";
    res.evidence = "unknown verdict '" + verdict + "'";
    return res;
  }
  if (j.contains("name") && j["name"].is_string()) res.name = j["name"].get<std::string>();
  res.verdict = verdict;
  if (j.contains("evidence") && j["evidence"].is_string())
    res.evidence = j["evidence"].get<std::string>();
  return res;
}

std::vector<fs::path> load_assertion_list(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  std::vector<fs::path> out;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    fs::path p = line.substr(start);
    if (p.is_relative()) p = file.parent_path() / p;
    out.push_back(p);
  }
  return out;
}

int ValidationReport::exit_code() const { return findings > 0 ? 1 : 0; }

ValidationReport run_validation(const TraceData& edge, const TraceData& ref,
                                const std::map<std::string, int>* labels,
                                const std::vector<fs::path>& assertion_exes,
                                const ValidationThresholds& th) {
  ValidationReport rep;
  Alignment al = align(edge, ref);
  rep.unmatched_edge = al.edge_only;
  rep.unmatched_ref = al.ref_only;

  rep.accuracy = accuracy_check(edge, ref, al, labels);

  if (th.force_layer_stage || rep.accuracy.agreement < th.agreement_threshold) {
    rep.layer_stage_ran = true;
    try {
      rep.input_div = input_divergence(edge, ref, al);
      rep.layers = per_layer_rmse(edge, ref, al);
      rep.divergence =
          localize_divergence(rep.input_div, rep.layers, th.jump_delta, th.jump_ratio);
    } catch (const StructuralError& e) {
      rep.structural_mismatch = true;
      rep.structural_note = e.what();
    }
  }

  rep.latency = latency_report(edge, ref, al, th.straggler_factor, th.straggler_min_share);

  rep.assertions = run_builtin_assertions(edge, ref, al);
  for (const fs::path& exe : assertion_exes)
    rep.assertions.push_back(run_external_assertion(exe, edge, ref, al));

  int findings = 0;
  for (const AssertionResult& a : rep.assertions)
    if (a.verdict == "fail" || a.verdict == "error") ++findings;
  if (rep.divergence.found()) ++findings;
  if (rep.structural_mismatch) ++findings;
  rep.findings = findings;
  return rep;
}

std::string report_to_json(const ValidationReport& r) {
  auto layer_json = [](const LayerDivergence& d) {
    json j;
    j["layer_index"] = d.layer_index;
    j["layer_type"] = d.layer_type;
    j["rmse"] = json_num(d.rmse);
    j["scale"] = json_num(d.scale);
    j["rmse_hat"] = json_num(d.rmse_hat);
    j["degenerate"] = d.degenerate;
    return j;
  };

  json divergence;
  if (r.divergence.preprocessing) {
    divergence["kind"] = "preprocessing";
  } else if (r.divergence.layer) {
    divergence["kind"] = "layer";
    divergence["layer_index"] = *r.divergence.layer;
    for (const LayerDivergence& d : r.layers)
      if (d.layer_index == *r.divergence.layer) divergence["layer_type"] = d.layer_type;
  } else {
    divergence["kind"] = "none";
  }

  json summary;
  summary["frames"] = r.accuracy.frames;
  summary["unmatched_edge"] = r.unmatched_edge;
  summary["unmatched_ref"] = r.unmatched_ref;
  summary["layer_stage_ran"] = r.layer_stage_ran;
  summary["divergence"] = divergence;
  summary["structural_mismatch"] = r.structural_mismatch;
  if (r.structural_mismatch) summary["structural_note"] = r.structural_note;
  summary["findings"] = r.findings;
  summary["exit_code"] = r.exit_code();

  json accuracy;
  accuracy["frames"] = r.accuracy.frames;
  accuracy["agreement"] = json_num(r.accuracy.agreement);
  accuracy["edge_top1"] = r.accuracy.edge_top1 ? json_num(*r.accuracy.edge_top1) : json();
  accuracy["ref_top1"] = r.accuracy.ref_top1 ? json_num(*r.accuracy.ref_top1) : json();

  json layers;
  layers["input"] = r.input_div ? layer_json(*r.input_div) : json();
  layers["series"] = json::array();
  for (const LayerDivergence& d : r.layers) layers["series"].push_back(layer_json(d));

  json latency;
  latency["edge_total_ns"] = r.latency.edge_total_ns;
  latency["ref_total_ns"] = r.latency.ref_total_ns;
  latency["by_type"] = json::array();
  for (const LatencyTypeRow& row : r.latency.by_type) {
    json t;
    t["layer_type"] = row.layer_type;
    t["edge_ns"] = row.edge_ns;
    t["ref_ns"] = row.ref_ns;
    latency["by_type"].push_back(t);
  }
  latency["stragglers"] = json::array();
  for (const Straggler& st : r.latency.stragglers) {
    json t;
    t["layer_index"] = st.layer_index;
    t["layer_type"] = st.layer_type;
    t["edge_share"] = json_num(st.edge_share);
    t["ref_share"] = json_num(st.ref_share);
    t["factor"] = json_num(st.factor);
    latency["stragglers"].push_back(t);
  }

  json assertions = json::array();
  for (const AssertionResult& a : r.assertions) {
    json t;
    t["name"] = a.name;
    t["verdict"] = a.verdict;
    t["evidence"] = a.evidence;
    assertions.push_back(t);
  }

  json root;
  root["summary"] = summary;
  root["accuracy"] = accuracy;
  root["layers"] = layers;
  root["latency"] = latency;
  root["assertions"] = assertions;
  return root.dump(2) + "\n";
}

}  // namespace exray
