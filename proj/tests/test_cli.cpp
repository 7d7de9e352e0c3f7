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

// Drives the actual binary through popen: flag surface, exit codes, and the
// run -> quantize -> replay -> validate loop on real files.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "exray/graph.hpp"
#include "exray/tensor_io.hpp"
#include "exray/validate.hpp"
#include "test_util.hpp"

using namespace exray;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, std::string* out = nullptr) {
  std::string cmd = std::string(EXRAY_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string text;
  char buf[4096];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) text.append(buf, got);
  int rc = ::pclose(p);
  if (out) *out = text;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Float graph whose input is an image-shaped [h, w, 3] tensor, with at least
// one Conv2D so type-targeted faults have somewhere to land.
Graph image_graph(testutil::Rng& rng) {
  testutil::GraphGenOptions go;
  go.min_layers = 3;
  go.max_layers = 6;
  for (;;) {
    Graph g = testutil::random_float_graph(rng, go);
    if (g.input_shape.size() != 3 || g.input_shape[2] != 3) continue;
    for (const LayerSpec& l : g.layers)
      if (l.type == LayerType::Conv2D) return g;
  }
}

PipelineSpec pipeline_for(const Graph& g) {
  PipelineSpec spec;
  spec.target_h = static_cast<int>(g.input_shape[0]);
  spec.target_w = static_cast<int>(g.input_shape[1]);
  return spec;
}

// Depthwise layer whose second channel carries weights 1000x smaller than
// the first; a shared per-tensor weight scale rounds them all to zero.
Graph lopsided_depthwise_graph() {
  Graph g;
  g.name = "lopsided";
  g.input_shape = {4, 4, 2};
  LayerSpec l;
  l.index = 0;
  l.name = "dw";
  l.type = LayerType::DepthwiseConv2D;
  ConvParams p;
  p.kh = p.kw = 3;
  p.pad_top = p.pad_bottom = p.pad_left = p.pad_right = 1;
  l.params = p;
  std::vector<float> w(18);
  for (int i = 0; i < 9; ++i) {
    w[i] = i % 2 ? -1.0f : 1.0f;
    w[9 + i] = i % 2 ? -0.001f : 0.001f;
  }
  l.weights = Tensor::from_f32({2, 3, 3}, w);
  g.layers.push_back(l);
  g.output_layer = 0;
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("help lists every command and flag") {
  std::string out;
  CHECK(run_cli("--help", &out) == 0);
  for (const char* cmd : {"run", "quantize", "replay", "validate"})
    CHECK(out.find(cmd) != std::string::npos);

  CHECK(run_cli("run --help", &out) == 0);
  for (const char* flag : {"--model", "--pipeline", "--inputs", "--labels", "--kernels",
                           "--fault", "--per-layer", "--device", "--out"})
    CHECK(out.find(flag) != std::string::npos);

  CHECK(run_cli("quantize --help", &out) == 0);
  for (const char* flag : {"--model", "--calib", "--scheme", "--pipeline", "--out"})
    CHECK(out.find(flag) != std::string::npos);

  CHECK(run_cli("replay --help", &out) == 0);
  for (const char* flag : {"--edge", "--model", "--pipeline", "--per-layer", "--int8",
                           "--device", "--out"})
    CHECK(out.find(flag) != std::string::npos);

  CHECK(run_cli("validate --help", &out) == 0);
  for (const char* flag :
       {"--edge", "--ref", "--labels", "--assertions", "--jump-delta", "--jump-ratio",
        "--agreement-threshold", "--straggler-factor", "--straggler-min-share", "--force-layers",
        "--report"})
    CHECK(out.find(flag) != std::string::npos);
}

TEST_CASE("usage and IO problems exit 2") {
  std::string out;
  CHECK(run_cli("", &out) == 2);
  CHECK(run_cli("frobnicate", &out) == 2);
  CHECK(run_cli("run", &out) == 2);  // missing required options
  CHECK(run_cli("run --model m --pipeline p --inputs i --out o --kernels warp", &out) == 2);

  testutil::TmpDir tmp("cli_io");
  CHECK(run_cli("validate --edge " + q(tmp / "nope") + " --ref " + q(tmp / "nada") +
                    " --report " + q(tmp / "r.json"),
                &out) == 2);
  CHECK(out.find("error:") != std::string::npos);
}

TEST_CASE("run, replay, validate: clean loop exits 0") {
  testutil::TmpDir tmp("cli_clean");
  testutil::Rng rng(120);
  Graph g = image_graph(rng);
  save_graph(tmp / "model", g);
  save_pipeline(tmp / "pipe.json", pipeline_for(g));
  auto names = testutil::write_dataset(tmp / "imgs", rng, 6, 24, 24);
  {
    std::ofstream lf(tmp / "labels.txt");
    for (size_t i = 0; i < names.size(); ++i) lf << names[i] << " " << (i % 2) << "\n";
  }

  std::string out;
  int rc = run_cli("run --model " + q(tmp / "model") + " --pipeline " + q(tmp / "pipe.json") +
                       " --inputs " + q(tmp / "imgs") + " --labels " + q(tmp / "labels.txt") +
                       " --per-layer --device unit-test --out " + q(tmp / "edge"),
                   &out);
  CHECK(rc == 0);
  CHECK(out.find("6 frames, 0 skipped") != std::string::npos);

  rc = run_cli("replay --edge " + q(tmp / "edge") + " --model " + q(tmp / "model") +
                   " --pipeline " + q(tmp / "pipe.json") + " --per-layer --out " + q(tmp / "ref"),
               &out);
  CHECK(rc == 0);
  CHECK(out.find("6 frames, 0 skipped") != std::string::npos);

  rc = run_cli("validate --edge " + q(tmp / "edge") + " --ref " + q(tmp / "ref") +
                   " --force-layers --report " + q(tmp / "report.json"),
               &out);
  CHECK(rc == 0);
  CHECK(out.find("findings: 0") != std::string::npos);

  std::ifstream rf(tmp / "report.json");
  nlohmann::json j = nlohmann::json::parse(rf);
  CHECK(j["summary"]["findings"] == 0);
  CHECK(j["summary"]["exit_code"] == 0);
  CHECK(j["accuracy"]["frames"] == 6);
  CHECK(j["accuracy"]["agreement"] == 1.0);
  CHECK(!j["accuracy"]["edge_top1"].is_null());  // labels embedded by the run
  CHECK(j["summary"]["divergence"]["kind"] == "none");

  // A failing external assertion turns the same pair into findings.
  fs::path script = tmp / "always_fail.sh";
  {
    std::ofstream s(script);
    s << "#!/bin/sh\necho '{\"verdict\":\"fail\",\"evidence\":\"planted\"}'\n";
  }
  fs::permissions(script, fs::perms::owner_all);
  {
    std::ofstream list(tmp / "checks.txt");
    list << script.string() << "\n";
  }
  rc = run_cli("validate --edge " + q(tmp / "edge") + " --ref " + q(tmp / "ref") +
                   " --assertions " + q(tmp / "checks.txt") + " --report " +
                   q(tmp / "report2.json"),
               &out);
  CHECK(rc == 1);
  CHECK(out.find("assertion always_fail: fail") != std::string::npos);
  std::ifstream rf2(tmp / "report2.json");
  nlohmann::json j2 = nlohmann::json::parse(rf2);
  bool seen = false;
  for (const auto& a : j2["assertions"])
    if (a["name"] == "always_fail" && a["verdict"] == "fail") seen = true;
  CHECK(seen);
}

TEST_CASE("faulted run is localized to the first faulted layer") {
  testutil::TmpDir tmp("cli_fault");
  testutil::Rng rng(121);
  Graph g = image_graph(rng);
  save_graph(tmp / "model", g);
  save_pipeline(tmp / "pipe.json", pipeline_for(g));
  testutil::write_dataset(tmp / "imgs", rng, 5, 24, 24);

  std::string out;
  int rc = run_cli("quantize --model " + q(tmp / "model") + " --calib " + q(tmp / "imgs") +
                       " --scheme per_tensor --pipeline " + q(tmp / "pipe.json") + " --out " +
                       q(tmp / "qmodel"),
                   &out);
  REQUIRE(rc == 0);
  CHECK(out.find("wrote") != std::string::npos);

  Graph qg = load_graph(tmp / "qmodel");
  int first_conv = -1;
  for (const LayerSpec& l : qg.layers)
    if (l.type == LayerType::Conv2D) {
      first_conv = l.index;
      break;
    }
  REQUIRE(first_conv >= 0);

  // Bad fault grammar is a usage error.
  CHECK(run_cli("run --model " + q(tmp / "qmodel") + " --pipeline " + q(tmp / "pipe.json") +
                    " --inputs " + q(tmp / "imgs") + " --fault acc=melt@2 --out " +
                    q(tmp / "nope"),
                &out) == 2);

  rc = run_cli("run --model " + q(tmp / "qmodel") + " --pipeline " + q(tmp / "pipe.json") +
                   " --inputs " + q(tmp / "imgs") +
                   " --per-layer --fault requant=truncate@Conv2D --out " + q(tmp / "edge"),
               &out);
  REQUIRE(rc == 0);

  rc = run_cli("replay --edge " + q(tmp / "edge") + " --model " + q(tmp / "qmodel") +
                   " --pipeline " + q(tmp / "pipe.json") + " --per-layer --int8 --out " +
                   q(tmp / "ref"),
               &out);
  REQUIRE(rc == 0);

  rc = run_cli("validate --edge " + q(tmp / "edge") + " --ref " + q(tmp / "ref") +
                   " --force-layers --jump-delta 0.001 --report " + q(tmp / "report.json"),
               &out);
  CHECK(rc == 1);
  CHECK(out.find("divergence localized: layer " + std::to_string(first_conv)) !=
        std::string::npos);

  std::ifstream rf(tmp / "report.json");
  nlohmann::json j = nlohmann::json::parse(rf);
  CHECK(j["summary"]["divergence"]["kind"] == "layer");
  CHECK(j["summary"]["divergence"]["layer_index"] == first_conv);
  CHECK(j["summary"]["exit_code"] == 1);
}

TEST_CASE("quantize rounds lopsided channels to zero only per-tensor") {
  testutil::TmpDir tmp("cli_quant");
  testutil::Rng rng(122);
  Graph g = lopsided_depthwise_graph();
  save_graph(tmp / "model", g);

  fs::create_directories(tmp / "calib");
  for (int i = 0; i < 4; ++i) {
    std::vector<float> v(32);
    for (size_t k = 0; k < v.size(); ++k)
      v[k] = static_cast<float>(k % 2 == 0 ? testutil::runif(rng, -1, 1)
                                           : testutil::runif(rng, -1000, 1000));
    char name[32];
    std::snprintf(name, sizeof name, "c%02d.ten", i);
    write_tensor(tmp / "calib" / name, Tensor::from_f32({4, 4, 2}, v));
  }

  std::string out;
  REQUIRE(run_cli("quantize --model " + q(tmp / "model") + " --calib " + q(tmp / "calib") +
                      " --scheme per_tensor --out " + q(tmp / "qpt"),
                  &out) == 0);
  REQUIRE(run_cli("quantize --model " + q(tmp / "model") + " --calib " + q(tmp / "calib") +
                      " --scheme per_channel --out " + q(tmp / "qpc"),
                  &out) == 0);

  auto dw_weights = [](const Graph& qg) -> const Tensor& {
    for (const LayerSpec& l : qg.layers)
      if (l.type == LayerType::DepthwiseConv2D) return *l.weights;
    REQUIRE(false);
    return *qg.layers[0].weights;
  };
  Graph qpt = load_graph(tmp / "qpt");
  Graph qpc = load_graph(tmp / "qpc");

  auto pt = dw_weights(qpt).i8();
  bool ch1_all_zero = true;
  for (int i = 9; i < 18; ++i)
    if (pt[i] != 0) ch1_all_zero = false;
  CHECK(ch1_all_zero);
  bool ch0_any = false;
  for (int i = 0; i < 9; ++i)
    if (pt[i] != 0) ch0_any = true;
  CHECK(ch0_any);

  auto pc = dw_weights(qpc).i8();
  bool ch1_any = false;
  for (int i = 9; i < 18; ++i)
    if (pc[i] != 0) ch1_any = true;
  CHECK(ch1_any);

  // Empty calibration dir is an error, not a silent fallback.
  fs::create_directories(tmp / "empty");
  CHECK(run_cli("quantize --model " + q(tmp / "model") + " --calib " + q(tmp / "empty") +
                    " --scheme per_tensor --out " + q(tmp / "q2"),
                &out) == 2);
  CHECK(out.find("no .ten tensors") != std::string::npos);
}
