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

// exray: run a model over a dataset while logging a trace, quantize a float
// model, replay a logged trace through a reference setup, and validate an
// edge trace against a reference trace.
//
// Exit codes: 0 clean, 1 validation findings, 2 usage or IO error.

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <CLI11.hpp>

#include "exray/quantize_graph.hpp"
#include "exray/replay.hpp"
#include "exray/tensor_io.hpp"
#include "exray/validate.hpp"

namespace fs = std::filesystem;

namespace {

struct RunArgs {
  std::string model, pipeline, inputs, out;
  std::string labels;
  std::string kernels = "optimized";
  std::vector<std::string> faults;
  bool per_layer = false;
  std::string device = "host";
};

struct QuantizeArgs {
  std::string model, calib, out;
  std::string scheme;
  std::string pipeline;  // only needed when calib holds images
};

struct ReplayArgs {
  std::string edge, model, pipeline, out;
  bool per_layer = false;
  bool int8 = false;
  std::string device = "reference-host";
};

struct ValidateArgs {
  std::string edge, ref, report;
  std::string labels, assertions;
  exray::ValidationThresholds th;
};

int cmd_run(const RunArgs& a) {
  exray::Graph g = exray::load_graph(a.model);
  exray::PipelineSpec spec = exray::load_pipeline(a.pipeline);

  exray::PlaybackOptions opts;
  opts.resolver.kind = exray::resolver_from_name(a.kernels);
  for (const std::string& f : a.faults) opts.resolver.faults.push_back(exray::fault_from_string(f));
  opts.capture = a.per_layer ? exray::CaptureMode::PerLayer : exray::CaptureMode::OutputOnly;
  opts.device = a.device;

  std::optional<fs::path> labels;
  if (!a.labels.empty()) labels = a.labels;
  exray::RunStats stats = exray::playback_dataset(a.inputs, labels, g, spec, opts, a.out);
  std::printf("wrote %s: %d frames, %d skipped\n", a.out.c_str(), stats.frames, stats.skipped);
  return 0;
}

int cmd_quantize(const QuantizeArgs& a) {
  exray::Graph g = exray::load_graph(a.model);

  std::vector<exray::Tensor> calib;
  std::vector<fs::path> tens, ppms;
  if (!fs::is_directory(a.calib)) throw exray::Error("calib dir not found: " + a.calib);
  for (const auto& ent : fs::directory_iterator(a.calib)) {
    if (!ent.is_regular_file()) continue;
    std::string ext = ent.path().extension().string();
    if (ext == ".ten") tens.push_back(ent.path());
    if (ext == ".ppm") ppms.push_back(ent.path());
  }
  std::sort(tens.begin(), tens.end());
  std::sort(ppms.begin(), ppms.end());
  if (!tens.empty()) {
    for (const fs::path& p : tens) calib.push_back(exray::read_tensor(p));
  } else if (!ppms.empty()) {
    if (a.pipeline.empty())
      throw exray::Error("calib dir holds images; pass --pipeline to preprocess them");
    exray::PipelineSpec spec = exray::load_pipeline(a.pipeline);
    for (const fs::path& p : ppms) calib.push_back(exray::run_pipeline(exray::load_ppm(p), spec));
  } else {
    throw exray::Error("calib dir has no .ten tensors or .ppm images: " + a.calib);
  }

  exray::QuantizeOptions opts;
  opts.per_channel = a.scheme == "per_channel";
  exray::Graph q = exray::quantize_graph(g, calib, opts);
  exray::save_graph(a.out, q);
  std::printf("wrote %s: %zu layers, %s\n", a.out.c_str(), q.layers.size(), a.scheme.c_str());
  return 0;
}

int cmd_replay(const ReplayArgs& a) {
  exray::TraceData edge = exray::read_trace(a.edge);
  exray::Graph g = exray::load_graph(a.model);
  exray::PipelineSpec spec = exray::load_pipeline(a.pipeline);

  exray::ReplayOptions opts;
  opts.capture = a.per_layer ? exray::CaptureMode::PerLayer : exray::CaptureMode::OutputOnly;
  opts.allow_int8 = a.int8;
  opts.device = a.device;
  exray::RunStats stats = exray::replay(edge, g, spec, opts, a.out);
  std::printf("wrote %s: %d frames, %d skipped\n", a.out.c_str(), stats.frames, stats.skipped);
  return 0;
}

int cmd_validate(const ValidateArgs& a) {
  exray::TraceData edge = exray::read_trace(a.edge);
  exray::TraceData ref = exray::read_trace(a.ref);

  std::map<std::string, int> labels;
  const std::map<std::string, int>* labels_ptr = nullptr;
  if (!a.labels.empty()) {
    labels = exray::load_label_file(a.labels);
    labels_ptr = &labels;
  }
  std::vector<fs::path> exes;
  if (!a.assertions.empty()) exes = exray::load_assertion_list(a.assertions);

  exray::ValidationReport rep = exray::run_validation(edge, ref, labels_ptr, exes, a.th);

  std::string text = exray::report_to_json(rep);
  std::ofstream out(a.report, std::ios::binary | std::ios::trunc);
  if (!out) throw exray::Error("cannot write " + a.report);
  out << text;
  out.close();

  std::printf("agreement %.4f over %d frames\n", rep.accuracy.agreement, rep.accuracy.frames);
  if (rep.divergence.preprocessing)
    std::printf("divergence localized: preprocessing\n");
  else if (rep.divergence.layer)
    std::printf("divergence localized: layer %d\n", *rep.divergence.layer);
  if (rep.structural_mismatch)
    std::printf("structural mismatch: %s\n", rep.structural_note.c_str());
  for (const exray::AssertionResult& as : rep.assertions)
    if (as.verdict == "fail" || as.verdict == "error")
      std::printf("assertion %s: %s %s\n", as.name.c_str(), as.verdict.c_str(),
                  as.evidence.c_str());
  std::printf("findings: %d; report written to %s\n", rep.findings, a.report.c_str());
  return rep.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edge ML deployment validation toolkit"};
  app.require_subcommand(1);

  RunArgs ra;
  CLI::App* run = app.add_subcommand("run", "run a model over a dataset, logging a trace");
  run->add_option("--model", ra.model, "model directory or model.json")->required();
  run->add_option("--pipeline", ra.pipeline, "preprocessing pipeline JSON")->required();
  run->add_option("--inputs", ra.inputs, "directory of .ppm images")->required();
  run->add_option("--labels", ra.labels, "label file: <filename> <class_index> per line");
  run->add_option("--kernels", ra.kernels, "kernel resolver: reference|optimized")
      ->check(CLI::IsMember({"reference", "optimized"}));
  run->add_option("--fault", ra.faults,
                  "inject a fault, e.g. acc=wrap@3 or requant=truncate@AveragePool2D");
  run->add_flag("--per-layer", ra.per_layer, "capture every layer output");
  run->add_option("--device", ra.device, "device tag recorded in the manifest");
  run->add_option("--out", ra.out, "trace directory to write")->required();

  QuantizeArgs qa;
  CLI::App* quantize = app.add_subcommand("quantize", "post-training int8 quantization");
  quantize->add_option("--model", qa.model, "float model directory or model.json")->required();
  quantize->add_option("--calib", qa.calib, "calibration dir (.ten tensors or .ppm images)")
      ->required();
  quantize->add_option("--scheme", qa.scheme, "per_tensor|per_channel")
      ->required()
      ->check(CLI::IsMember({"per_tensor", "per_channel"}));
  quantize->add_option("--pipeline", qa.pipeline, "pipeline JSON, for .ppm calibration dirs");
  quantize->add_option("--out", qa.out, "quantized model directory to write")->required();

  ReplayArgs pa;
  CLI::App* rep = app.add_subcommand("replay", "replay logged inputs through a reference setup");
  rep->add_option("--edge", pa.edge, "edge trace directory")->required();
  rep->add_option("--model", pa.model, "reference model directory or model.json")->required();
  rep->add_option("--pipeline", pa.pipeline, "reference pipeline JSON")->required();
  rep->add_flag("--per-layer", pa.per_layer, "capture every layer output");
  rep->add_flag("--int8", pa.int8, "allow replaying through a quantized reference graph");
  rep->add_option("--device", pa.device, "device tag recorded in the manifest");
  rep->add_option("--out", pa.out, "reference trace directory to write")->required();

  ValidateArgs va;
  CLI::App* val = app.add_subcommand("validate", "compare an edge trace against a reference");
  val->add_option("--edge", va.edge, "edge trace directory")->required();
  val->add_option("--ref", va.ref, "reference trace directory")->required();
  val->add_option("--labels", va.labels, "label file for absolute top-1");
  val->add_option("--assertions", va.assertions, "file listing external assertion executables");
  val->add_option("--jump-delta", va.th.jump_delta, "divergence jump threshold on rmse_hat");
  val->add_option("--jump-ratio", va.th.jump_ratio, "divergence ratio threshold");
  val->add_option("--agreement-threshold", va.th.agreement_threshold,
                  "agreement below this triggers the per-layer stage");
  val->add_option("--straggler-factor", va.th.straggler_factor,
                  "latency share ratio that flags a straggler layer");
  val->add_option("--straggler-min-share", va.th.straggler_min_share,
                  "ignore layers below this share of edge latency");
  val->add_flag("--force-layers", va.th.force_layer_stage,
                "run the per-layer stage even when accuracy agrees");
  val->add_option("--report", va.report, "validation report JSON to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // --help exits 0; anything else is a usage error
  }

  try {
    if (run->parsed()) return cmd_run(ra);
    if (quantize->parsed()) return cmd_quantize(qa);
    if (rep->parsed()) return cmd_replay(pa);
    if (val->parsed()) return cmd_validate(va);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
