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

// Shared test fixtures: temp dirs, random tensors/images/graphs, and a
// harness that turns a list of input tensors into a trace directory the
// same way a dataset run would.

#ifndef EXRAY_TESTS_TEST_UTIL_HPP_
#define EXRAY_TESTS_TEST_UTIL_HPP_

#include <atomic>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "exray/image.hpp"
#include "exray/quantize_graph.hpp"
#include "exray/replay.hpp"
#include "exray/trace.hpp"

namespace testutil {

class TmpDir {
 public:
  explicit TmpDir(const std::string& tag) {
    static std::atomic<uint64_t> n{0};
    path_ = std::filesystem::temp_directory_path() /
            ("exray_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(n.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TmpDir(const TmpDir&) = delete;
  TmpDir& operator=(const TmpDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

using Rng = std::mt19937;

inline double runif(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline int rint(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

inline exray::Tensor rand_f32(Rng& rng, const exray::Shape& shape, double lo = -1.0,
                              double hi = 1.0) {
  std::vector<float> v(exray::shape_elems(shape));
  for (float& x : v) x = static_cast<float>(runif(rng, lo, hi));
  return exray::Tensor::from_f32(shape, v);
}

inline exray::Image rand_image(Rng& rng, int h, int w) {
  exray::Image img = exray::make_image(h, w, 3, exray::ChannelOrder::RGB);
  for (uint8_t& b : img.data) b = static_cast<uint8_t>(rint(rng, 0, 255));
  return img;
}

inline std::vector<std::string> write_dataset(const std::filesystem::path& dir, Rng& rng, int n,
                                              int h, int w) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img%03d.ppm", i);
    exray::save_ppm(dir / name, rand_image(rng, h, w));
    names.push_back(name);
  }
  return names;
}

// ---------------------------------------------------------------------------
// Random float graph generator. Shapes are tracked by replaying shape
// inference after each appended layer, so generated graphs always validate.

struct GraphGenOptions {
  int min_layers = 3;
  int max_layers = 18;
  int min_hw = 6;
  int max_hw = 12;
  int max_c = 8;
  // Guarantee at least one Conv2D/FullyConnected with reduction length
  // (kh*kw*ic or in) >= 64; such layers make good accumulator-fault sites.
  bool want_big_reduction = false;
};

namespace graphgen {

inline exray::Tensor rand_weights(Rng& rng, const exray::Shape& shape, double amp) {
  return rand_f32(rng, shape, -amp, amp);
}

inline exray::Activation rand_act(Rng& rng) {
  switch (rint(rng, 0, 2)) {
    case 0: return exray::Activation::None;
    case 1: return exray::Activation::ReLU;
    default: return exray::Activation::ReLU6;
  }
}

}  // namespace graphgen

inline exray::Graph random_float_graph(Rng& rng, const GraphGenOptions& opt = {}) {
  using namespace exray;
  Graph g;
  g.name = "rand";
  int c0 = rint(rng, 1, opt.max_c);
  g.input_shape = {rint(rng, opt.min_hw, opt.max_hw), rint(rng, opt.min_hw, opt.max_hw), c0};
  g.input_dtype = DType::F32;

  int n = rint(rng, opt.min_layers, opt.max_layers);
  int big_at = opt.want_big_reduction ? rint(rng, 0, n - 1) : -1;

  auto current = [&]() -> LayerIO {
    if (g.layers.empty()) return {g.input_shape, g.input_dtype};
    return infer_shapes(g).back();
  };
  auto push = [&](LayerSpec l) {
    l.index = static_cast<int>(g.layers.size());
    g.layers.push_back(std::move(l));
    g.output_layer = static_cast<int>(g.layers.size()) - 1;
  };

  for (int i = 0; i < n; ++i) {
    LayerIO cur = current();
    bool spatial = cur.shape.size() == 3;
    int h = spatial ? static_cast<int>(cur.shape[0]) : 0;
    int w = spatial ? static_cast<int>(cur.shape[1]) : 0;
    int c = spatial ? static_cast<int>(cur.shape[2]) : static_cast<int>(cur.shape[0]);

    LayerSpec l;
    char name[32];
    bool force_big = i == big_at;

    // choose a type the current shape supports
    std::vector<LayerType> menu;
    if (spatial && h >= 3 && w >= 3) {
      menu.insert(menu.end(), {LayerType::Conv2D, LayerType::Conv2D, LayerType::DepthwiseConv2D,
                               LayerType::AveragePool2D, LayerType::Pad});
      if (!force_big) menu.push_back(LayerType::Mean);
    } else if (spatial) {
      menu.push_back(LayerType::Pad);
      menu.push_back(LayerType::Conv2D);
    } else {
      menu.push_back(LayerType::FullyConnected);
      if (!force_big && i == n - 1) menu.push_back(LayerType::Softmax);
    }
    // residual add when an earlier layer has the same shape
    if (!force_big) {
      for (size_t j = 0; j + 1 < g.layers.size(); ++j) {
        auto ios = infer_shapes(g);
        if (ios[j].shape == cur.shape && ios[j].dtype == cur.dtype) {
          menu.push_back(LayerType::Add);
          break;
        }
      }
    }
    LayerType t = menu[static_cast<size_t>(rint(rng, 0, static_cast<int>(menu.size()) - 1))];
    if (force_big) t = spatial && h >= 3 && w >= 3 ? LayerType::Conv2D : LayerType::FullyConnected;

    std::snprintf(name, sizeof name, "l%02d", i);
    l.name = name;
    l.type = t;
    switch (t) {
      case LayerType::Conv2D: {
        int kh = h >= 3 ? 3 : 1, kw = w >= 3 ? 3 : 1;
        int ic = c;
        if (force_big && kh * kw * ic < 64) {
          // widen the input first with a 1x1 expansion
          LayerSpec widen;
          std::snprintf(name, sizeof name, "l%02d_widen", i);
          widen.name = name;
          widen.type = LayerType::Conv2D;
          ConvParams wp;
          wp.kh = wp.kw = 1;
          int wide_c = (64 + kh * kw - 1) / (kh * kw);
          widen.params = wp;
          widen.weights = graphgen::rand_weights(rng, {wide_c, 1, 1, ic}, 1.0 / std::sqrt(ic));
          widen.bias = rand_f32(rng, {wide_c}, -0.1, 0.1);
          push(widen);
          ic = wide_c;
        }
        ConvParams p;
        p.kh = kh;
        p.kw = kw;
        p.stride_h = p.stride_w = 1;
        p.pad_top = p.pad_bottom = p.pad_left = p.pad_right = kh == 3 ? 1 : 0;
        p.act = graphgen::rand_act(rng);
        int oc = rint(rng, 1, opt.max_c);
        std::snprintf(name, sizeof name, "l%02d_conv", i);
        l.name = name;
        l.params = p;
        l.weights = graphgen::rand_weights(rng, {oc, p.kh, p.kw, ic}, 1.0 / std::sqrt(p.kh * p.kw * ic));
        l.bias = rand_f32(rng, {oc}, -0.1, 0.1);
        break;
      }
      case LayerType::DepthwiseConv2D: {
        ConvParams p;
        p.kh = p.kw = 3;
        p.stride_h = p.stride_w = 1;
        p.pad_top = p.pad_bottom = p.pad_left = p.pad_right = 1;
        p.act = graphgen::rand_act(rng);
        std::snprintf(name, sizeof name, "l%02d_dw", i);
        l.name = name;
        l.params = p;
        l.weights = graphgen::rand_weights(rng, {c, 3, 3}, 1.0 / 3.0);
        l.bias = rand_f32(rng, {c}, -0.1, 0.1);
        break;
      }
      case LayerType::FullyConnected: {
        int in = static_cast<int>(shape_elems(cur.shape));
        if (force_big && in < 64) {
          LayerSpec widen;
          std::snprintf(name, sizeof name, "l%02d_widen", i);
          widen.name = name;
          widen.type = LayerType::FullyConnected;
          widen.params = FcParams{};
          widen.weights = graphgen::rand_weights(rng, {64, in}, 1.0 / std::sqrt(in));
          widen.bias = rand_f32(rng, {64}, -0.1, 0.1);
          push(widen);
          in = 64;
        }
        FcParams p;
        p.act = graphgen::rand_act(rng);
        int out = rint(rng, 2, 16);
        std::snprintf(name, sizeof name, "l%02d_fc", i);
        l.name = name;
        l.params = p;
        l.weights = graphgen::rand_weights(rng, {out, in}, 1.0 / std::sqrt(in));
        l.bias = rand_f32(rng, {out}, -0.1, 0.1);
        break;
      }
      case LayerType::AveragePool2D: {
        PoolParams p;
        p.kh = p.kw = 3;
        p.stride_h = p.stride_w = 1;
        p.pad_top = p.pad_bottom = p.pad_left = p.pad_right = 1;
        std::snprintf(name, sizeof name, "l%02d_pool", i);
        l.name = name;
        l.params = p;
        break;
      }
      case LayerType::Mean: {
        std::snprintf(name, sizeof name, "l%02d_mean", i);
        l.name = name;
        l.params = NoParams{};
        break;
      }
      case LayerType::Pad: {
        PadParams p;
        p.top = rint(rng, 0, 1);
        p.bottom = rint(rng, 0, 1);
        p.left = rint(rng, 0, 1);
        p.right = rint(rng, 0, 1);
        std::snprintf(name, sizeof name, "l%02d_pad", i);
        l.name = name;
        l.params = p;
        break;
      }
      case LayerType::Add: {
        auto ios = infer_shapes(g);
        std::vector<int> options;
        for (size_t j = 0; j + 1 < g.layers.size(); ++j)
          if (ios[j].shape == cur.shape && ios[j].dtype == cur.dtype)
            options.push_back(static_cast<int>(j));
        AddParams p;
        p.operand = options[static_cast<size_t>(
            rint(rng, 0, static_cast<int>(options.size()) - 1))];
        p.act = exray::Activation::None;
        std::snprintf(name, sizeof name, "l%02d_add", i);
        l.name = name;
        l.params = p;
        break;
      }
      case LayerType::Softmax: {
        std::snprintf(name, sizeof name, "l%02d_softmax", i);
        l.name = name;
        l.params = NoParams{};
        break;
      }
      default:
        l.params = NoParams{};
        break;
    }
    push(std::move(l));
  }
  g.validate();
  return g;
}

// Random inputs matching the graph's input shape, plus a quantized twin of
// the graph calibrated on those same inputs.
inline std::vector<exray::Tensor> rand_inputs(Rng& rng, const exray::Graph& g, int n,
                                              double lo = -1.0, double hi = 1.0) {
  std::vector<exray::Tensor> out;
  for (int i = 0; i < n; ++i) out.push_back(rand_f32(rng, g.input_shape, lo, hi));
  return out;
}

inline exray::Graph quantized_twin(Rng& rng, const exray::Graph& g, bool per_channel,
                                   int calib_frames = 4) {
  auto calib = rand_inputs(rng, g, calib_frames);
  exray::QuantizeOptions opts;
  opts.per_channel = per_channel;
  return exray::quantize_graph(g, calib, opts);
}

// ---------------------------------------------------------------------------
// Minimal dataset-style run over raw tensors (no images, no pipeline).

struct TensorRunOptions {
  exray::KernelResolver resolver;
  exray::CaptureMode capture = exray::CaptureMode::PerLayer;
  bool reference_run = false;
  std::string device = "edge-host";
};

inline void trace_from_tensors(const exray::Graph& g, const std::vector<exray::Tensor>& inputs,
                               const TensorRunOptions& opt,
                               const std::filesystem::path& out_dir) {
  exray::RunMeta meta = exray::make_run_meta(g, nullptr, opt.resolver, opt.capture,
                                             opt.reference_run, opt.device);
  exray::MonitorSession session = exray::MonitorSession::begin(out_dir, meta);
  for (size_t i = 0; i < inputs.size(); ++i) {
    char fid[16];
    std::snprintf(fid, sizeof fid, "f%03zu", i);
    session.start_frame(fid);
    session.log_input("model_input", inputs[i]);
    session.on_inf_start();
    exray::InferResult r = exray::infer(g, inputs[i], opt.resolver, opt.capture);
    session.on_inf_stop(r);
  }
  session.finish();
}

}  // namespace testutil

#endif  // EXRAY_TESTS_TEST_UTIL_HPP_
