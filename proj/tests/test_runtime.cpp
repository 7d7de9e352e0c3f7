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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "exray/kernels.hpp"
#include "exray/quant.hpp"
#include "exray/quantize_graph.hpp"
#include "exray/runtime.hpp"
#include "exray/tensor_io.hpp"
#include "test_util.hpp"

using namespace exray;

namespace {

// Direct-convolution oracle, written before looking at either production
// kernel: plain nested loops, double accumulation, no layout tricks.
std::vector<double> conv_oracle(const Tensor& in, const Tensor& w, const Tensor* bias,
                                const ConvParams& p) {
  const Shape& s = in.shape();
  int64_t h = s[0], wd = s[1], ic = s[2];
  const Shape& ws = w.shape();
  int64_t oc = ws[0];
  int64_t oh = (h + p.pad_top + p.pad_bottom - p.kh) / p.stride_h + 1;
  int64_t ow = (wd + p.pad_left + p.pad_right - p.kw) / p.stride_w + 1;
  auto x = in.f32();
  auto k = w.f32();
  std::vector<double> out(static_cast<size_t>(oh * ow * oc), 0.0);
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox)
      for (int64_t o = 0; o < oc; ++o) {
        double acc = bias ? bias->f32()[o] : 0.0;
        for (int ky = 0; ky < p.kh; ++ky) {
          int64_t y = oy * p.stride_h - p.pad_top + ky;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < p.kw; ++kx) {
            int64_t x0 = ox * p.stride_w - p.pad_left + kx;
            if (x0 < 0 || x0 >= wd) continue;
            for (int64_t i = 0; i < ic; ++i)
              acc += static_cast<double>(x[(y * wd + x0) * ic + i]) *
                     k[((o * p.kh + ky) * p.kw + kx) * ic + i];
          }
        }
        out[static_cast<size_t>((oy * ow + ox) * oc + o)] = acc;
      }
  return out;
}

QuantParams sym(double scale) {
  QuantParams qp;
  qp.scheme = QuantScheme::PerTensorSymmetric;
  qp.scale = {scale};
  qp.zero_point = 0;
  qp.calib_min = {-scale * kSymmetricMax};
  qp.calib_max = {scale * kSymmetricMax};
  return qp;
}

Graph softmax_graph() {
  Graph g;
  g.name = "softmax2";
  g.input_shape = {2};
  LayerSpec l;
  l.index = 0;
  l.name = "out";
  l.type = LayerType::Softmax;
  l.params = NoParams{};
  g.layers.push_back(l);
  g.output_layer = 0;
  g.validate();
  return g;
}

// Float 1x1 conv carrying the identity matrix over `c` channels.
Graph identity_conv_graph(int64_t h, int64_t w, int64_t c) {
  Graph g;
  g.name = "identity";
  g.input_shape = {h, w, c};
  LayerSpec l;
  l.index = 0;
  l.name = "id";
  l.type = LayerType::Conv2D;
  l.params = ConvParams{};
  std::vector<float> wv(static_cast<size_t>(c * c), 0.0f);
  for (int64_t i = 0; i < c; ++i) wv[static_cast<size_t>(i * c + i)] = 1.0f;
  l.weights = Tensor::from_f32({c, 1, 1, c}, wv);
  g.layers.push_back(l);
  g.output_layer = 0;
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("fault spec grammar round-trips") {
  FaultSpec f = fault_from_string("acc=wrap@3");
  CHECK(f.mode == FaultMode::WrapAccumulator);
  CHECK(f.layer_index == 3);
  CHECK(!f.layer_type.has_value());

  f = fault_from_string("acc=narrow@DepthwiseConv2D");
  CHECK(f.mode == FaultMode::NarrowAccumulator);
  CHECK(f.layer_type == LayerType::DepthwiseConv2D);

  f = fault_from_string("requant=truncate@AveragePool2D");
  CHECK(f.mode == FaultMode::TruncateRequant);

  f = fault_from_string("slow=100@Conv2D");
  CHECK(f.mode == FaultMode::SlowKernel);
  CHECK(f.slow_factor == 100);

  for (const char* s : {"acc=wrap@3", "acc=narrow@DepthwiseConv2D",
                        "requant=truncate@AveragePool2D", "slow=7@5"})
    CHECK(fault_to_string(fault_from_string(s)) == s);

  CHECK_THROWS_AS(fault_from_string("acc=wrap"), Error);
  CHECK_THROWS_AS(fault_from_string("slow=0@3"), Error);
  CHECK_THROWS_AS(fault_from_string("slow=x@3"), Error);
  CHECK_THROWS_AS(fault_from_string("acc=melt@3"), Error);
  CHECK_THROWS_AS(fault_from_string("voltage=low@3"), Error);
  CHECK_THROWS_AS(fault_from_string("acc=wrap@Blurpool"), Error);
}

TEST_CASE("resolver routes faults to matching layers only") {
  Graph g = identity_conv_graph(2, 2, 2);
  LayerSpec conv = g.layers[0];
  LayerSpec pool;
  pool.index = 1;
  pool.name = "pool";
  pool.type = LayerType::AveragePool2D;
  pool.params = PoolParams{};

  KernelResolver r;
  r.kind = ResolverKind::Optimized;
  r.faults = {fault_from_string("requant=truncate@AveragePool2D"),
              fault_from_string("acc=wrap@0"), fault_from_string("slow=9@1")};

  CHECK(r.ctx_for(conv).wrap_acc);
  CHECK(!r.ctx_for(conv).trunc_requant);
  CHECK(r.ctx_for(pool).trunc_requant);
  CHECK(!r.ctx_for(pool).wrap_acc);
  CHECK(r.slow_factor_for(conv) == 1);
  CHECK(r.slow_factor_for(pool) == 9);
}

TEST_CASE("one-layer softmax model loads and runs") {
  testutil::TmpDir tmp("softmax");
  Graph g = softmax_graph();
  save_graph(tmp.path(), g);
  Graph back = load_graph(tmp.path());
  CHECK(back.layers.size() == 1);
  CHECK(back.layers[0].type == LayerType::Softmax);

  KernelResolver r;
  InferResult res = infer(back, Tensor::from_f32({2}, {0.0f, 0.0f}), r);
  CHECK(res.output.f32()[0] == 0.5f);
  CHECK(res.output.f32()[1] == 0.5f);
}

TEST_CASE("identity 1x1 conv returns its input") {
  testutil::Rng rng(11);
  Graph g = identity_conv_graph(3, 4, 2);
  Tensor in = testutil::rand_f32(rng, {3, 4, 2});
  for (ResolverKind k : {ResolverKind::Reference, ResolverKind::Optimized}) {
    KernelResolver r;
    r.kind = k;
    InferResult res = infer(g, in, r);
    CHECK(res.output.same_data(in));
  }
}

TEST_CASE("3x3 conv matches the naive oracle") {
  testutil::Rng rng(12);
  Tensor in = testutil::rand_f32(rng, {5, 5, 3});
  ConvParams p;
  p.kh = p.kw = 3;
  LayerSpec l;
  l.index = 0;
  l.name = "c";
  l.type = LayerType::Conv2D;
  l.params = p;
  l.weights = testutil::rand_f32(rng, {4, 3, 3, 3});
  l.bias = testutil::rand_f32(rng, {4});
  auto want = conv_oracle(in, *l.weights, &*l.bias, p);

  for (ResolverKind k : {ResolverKind::Reference, ResolverKind::Optimized}) {
    Tensor out = run_layer(l, k, in, nullptr, {});
    CHECK(out.shape() == Shape{3, 3, 4});
    auto v = out.f32();
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(v[i] == doctest::Approx(want[i]).epsilon(1e-5));
  }
}

TEST_CASE("all-zero conv weights broadcast the bias") {
  testutil::Rng rng(13);
  Tensor in = testutil::rand_f32(rng, {4, 4, 2});
  LayerSpec l;
  l.index = 0;
  l.name = "c";
  l.type = LayerType::Conv2D;
  ConvParams p;
  p.kh = p.kw = 3;
  p.pad_top = p.pad_bottom = p.pad_left = p.pad_right = 1;
  l.params = p;
  l.weights = Tensor::from_f32({2, 3, 3, 2}, std::vector<float>(36, 0.0f));
  l.bias = Tensor::from_f32({2}, {0.25f, -1.5f});
  Tensor out = run_layer(l, ResolverKind::Optimized, in, nullptr, {});
  auto v = out.f32();
  for (size_t i = 0; i < v.size(); i += 2) {
    CHECK(v[i] == 0.25f);
    CHECK(v[i + 1] == -1.5f);
  }
}

TEST_CASE("int8 conv with unit requant multiplier is integer arithmetic") {
  // s_in * s_w == s_out makes the requant multiplier 1, so the output is
  // exactly the clamped i32 accumulation.
  LayerSpec l;
  l.index = 0;
  l.name = "c";
  l.type = LayerType::Conv2D;
  l.params = ConvParams{};
  l.weights = Tensor::from_i8({1, 1, 1, 2}, {3, 5}, sym(0.2));
  l.out_quant = sym(0.1 * 0.2);
  Tensor in = Tensor::from_i8({1, 1, 2}, {10, -7}, sym(0.1));

  for (ResolverKind k : {ResolverKind::Reference, ResolverKind::Optimized}) {
    CHECK(run_layer(l, k, in, nullptr, {}).i8()[0] == -5);  // 30 - 35
  }

  l.bias = Tensor::from_i32({1}, {100});
  CHECK(run_layer(l, ResolverKind::Reference, in, nullptr, {}).i8()[0] == 95);

  l.bias.reset();
  l.weights = Tensor::from_i8({1, 1, 1, 2}, {100, 100}, sym(0.2));
  Tensor big = Tensor::from_i8({1, 1, 2}, {100, 100}, sym(0.1));
  CHECK(run_layer(l, ResolverKind::Reference, big, nullptr, {}).i8()[0] == 127);
}

TEST_CASE("wrap-accumulator fault flips an overflowing depthwise conv") {
  // 370x370 taps of 127*127 sum to ~2.21e9, past i32. Saturation keeps the
  // result at +127; wrapping lands deep in the negatives.
  const int n = 370;
  std::vector<int8_t> big(static_cast<size_t>(n) * n, 127);
  LayerSpec l;
  l.index = 0;
  l.name = "dw";
  l.type = LayerType::DepthwiseConv2D;
  ConvParams p;
  p.kh = p.kw = n;
  l.params = p;
  l.weights = Tensor::from_i8({1, n, n}, big, sym(0.01));
  l.out_quant = sym(0.01 * 0.01);
  Tensor in = Tensor::from_i8({n, n, 1}, big, sym(0.01));

  KernelCtx clean;
  KernelCtx wrap;
  wrap.wrap_acc = true;
  for (ResolverKind k : {ResolverKind::Reference, ResolverKind::Optimized}) {
    CHECK(run_layer(l, k, in, nullptr, clean).i8()[0] == 127);
    CHECK(run_layer(l, k, in, nullptr, wrap).i8()[0] == -127);
  }

  // Small magnitudes never leave i32, so the fault is invisible.
  std::vector<int8_t> ones(static_cast<size_t>(n) * n, 1);
  Tensor small = Tensor::from_i8({n, n, 1}, ones, sym(0.01));
  Tensor a = run_layer(l, ResolverKind::Reference, small, nullptr, clean);
  Tensor b = run_layer(l, ResolverKind::Reference, small, nullptr, wrap);
  CHECK(a.same_data(b));
}

TEST_CASE("mean of a constant tensor is that constant") {
  LayerSpec l;
  l.index = 0;
  l.name = "m";
  l.type = LayerType::Mean;
  l.params = NoParams{};
  Tensor in = Tensor::from_f32({3, 4, 2}, std::vector<float>(24, 5.5f));
  Tensor out = run_layer(l, ResolverKind::Reference, in, nullptr, {});
  CHECK(out.shape() == Shape{2});
  CHECK(out.f32()[0] == 5.5f);
  CHECK(out.f32()[1] == 5.5f);
}

TEST_CASE("int8 average pool rounds half away; truncation fault truncates") {
  // Window {1, 2}: sum 3 over divisor 2 = 1.5. Correct rounding gives 2,
  // truncation toward zero gives 1.
  LayerSpec l;
  l.index = 0;
  l.name = "p";
  l.type = LayerType::AveragePool2D;
  PoolParams p;
  p.kh = 1;
  p.kw = 2;
  l.params = p;
  l.out_quant = sym(0.1);
  Tensor in = Tensor::from_i8({1, 2, 1}, {1, 2}, sym(0.1));

  KernelCtx clean;
  KernelCtx trunc;
  trunc.trunc_requant = true;
  CHECK(run_layer(l, ResolverKind::Reference, in, nullptr, clean).i8()[0] == 2);
  CHECK(run_layer(l, ResolverKind::Reference, in, nullptr, trunc).i8()[0] == 1);
}

TEST_CASE("pad inserts zeros and preserves the interior") {
  testutil::Rng rng(14);
  Tensor in = testutil::rand_f32(rng, {2, 3, 2});
  LayerSpec l;
  l.index = 0;
  l.name = "pad";
  l.type = LayerType::Pad;
  PadParams p;
  p.top = 1;
  p.bottom = 2;
  p.left = 0;
  p.right = 1;
  l.params = p;
  Tensor out = run_layer(l, ResolverKind::Reference, in, nullptr, {});
  REQUIRE(out.shape() == Shape{5, 4, 2});
  auto src = in.f32();
  auto dst = out.f32();
  double border = 0.0;
  for (int64_t y = 0; y < 5; ++y)
    for (int64_t x = 0; x < 4; ++x)
      for (int64_t c = 0; c < 2; ++c) {
        double v = dst[(y * 4 + x) * 2 + c];
        if (y >= 1 && y < 3 && x < 3) {
          // Cropping the padded output back down recovers the input exactly.
          CHECK(v == src[((y - 1) * 3 + x) * 2 + c]);
        } else {
          border += std::abs(v);
        }
      }
  CHECK(border == 0.0);
}

TEST_CASE("pool window larger than the unpadded input errors") {
  Graph g;
  g.name = "badpool";
  g.input_shape = {3, 3, 1};
  LayerSpec l;
  l.index = 0;
  l.name = "p";
  l.type = LayerType::AveragePool2D;
  PoolParams p;
  p.kh = p.kw = 5;
  l.params = p;
  g.layers.push_back(l);
  g.output_layer = 0;
  CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("layer 0"), Error);
}

TEST_CASE("add must reference an earlier layer") {
  Graph g = identity_conv_graph(2, 2, 2);
  LayerSpec add;
  add.index = 1;
  add.name = "a";
  add.type = LayerType::Add;
  AddParams ap;
  ap.operand = 1;  // self-reference
  add.params = ap;
  g.layers.push_back(add);
  g.output_layer = 1;
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("load rejects an add that points forward") {
  testutil::TmpDir tmp("fwdadd");
  Graph g = identity_conv_graph(2, 2, 2);
  LayerSpec conv2 = g.layers[0];
  conv2.index = 1;
  conv2.name = "id2";
  LayerSpec add;
  add.index = 2;
  add.name = "a";
  add.type = LayerType::Add;
  AddParams ap;
  ap.operand = 0;
  add.params = ap;
  g.layers.push_back(conv2);
  g.layers.push_back(add);
  g.output_layer = 2;
  g.validate();
  save_graph(tmp.path(), g);

  auto mj = tmp / "model.json";
  nlohmann::json j;
  {
    std::ifstream in(mj);
    in >> j;
  }
  j["layers"][2]["params"]["operand"] = 5;
  {
    std::ofstream out(mj, std::ios::trunc);
    out << j.dump(2);
  }
  CHECK_THROWS_WITH_AS(load_graph(tmp.path()), doctest::Contains("layer 2"), Error);
}

TEST_CASE("load names the layer when a weight blob has the wrong shape") {
  testutil::TmpDir tmp("badblob");
  Graph g = identity_conv_graph(2, 2, 2);
  save_graph(tmp.path(), g);
  // Swap the conv weights for a blob with the wrong input-channel count.
  write_tensor(tmp.path() / "blobs" / "L000_w.ten",
               Tensor::from_f32({2, 1, 1, 3}, std::vector<float>(6, 1.0f)));
  CHECK_THROWS_WITH_AS(load_graph(tmp.path()), doctest::Contains("layer 0"), Error);
}

TEST_CASE("load rejects unknown layer types") {
  testutil::TmpDir tmp("badtype");
  save_graph(tmp.path(), softmax_graph());
  auto mj = tmp / "model.json";
  nlohmann::json j;
  {
    std::ifstream in(mj);
    in >> j;
  }
  j["layers"][0]["type"] = "Blurpool";
  {
    std::ofstream out(mj, std::ios::trunc);
    out << j.dump(2);
  }
  CHECK_THROWS_WITH_AS(load_graph(tmp.path()), doctest::Contains("Blurpool"), Error);
}

TEST_CASE("load rejects a missing blob") {
  testutil::TmpDir tmp("noblob");
  Graph g = identity_conv_graph(2, 2, 2);
  save_graph(tmp.path(), g);
  std::filesystem::remove(tmp.path() / "blobs" / "L000_w.ten");
  CHECK_THROWS_WITH_AS(load_graph(tmp.path()), doctest::Contains("missing blob"), Error);
}

TEST_CASE("infer rejects mismatched inputs") {
  Graph g = identity_conv_graph(2, 2, 2);
  KernelResolver r;
  CHECK_THROWS_WITH_AS(infer(g, Tensor::from_f32({2, 2, 3}, std::vector<float>(12, 0.0f)), r),
                       doctest::Contains("shape"), Error);

  // Int8 graph fed a float tensor: dtype error, not silent conversion.
  testutil::Rng rng(15);
  Graph qg = testutil::quantized_twin(rng, g, false);
  Graph headless = qg;
  headless.layers.erase(headless.layers.begin());  // drop the Quantize layer
  for (auto& l : headless.layers) l.index -= 1;
  headless.input_dtype = DType::I8;
  headless.input_quant = qg.layers[0].out_quant;
  headless.output_layer -= 1;
  headless.validate();
  CHECK_THROWS_WITH_AS(infer(headless, testutil::rand_f32(rng, {2, 2, 2}), r),
                       doctest::Contains("dtype"), Error);
}

TEST_CASE("model save/load round-trips bitwise") {
  testutil::Rng rng(16);
  testutil::TmpDir tmp("roundtrip");
  Graph g = testutil::random_float_graph(rng);
  Graph q = testutil::quantized_twin(rng, g, true);
  save_graph(tmp.path(), q);
  Graph back = load_graph(tmp.path());

  CHECK(back.layers.size() == q.layers.size());
  CHECK(model_hash(back) == model_hash(q));
  for (size_t i = 0; i < q.layers.size(); ++i) {
    CHECK(back.layers[i].type == q.layers[i].type);
    if (q.layers[i].weights) CHECK(back.layers[i].weights->same_data(*q.layers[i].weights));
    if (q.layers[i].bias) CHECK(back.layers[i].bias->same_data(*q.layers[i].bias));
    CHECK(back.layers[i].out_quant == q.layers[i].out_quant);
  }

  Tensor in = testutil::rand_f32(rng, g.input_shape);
  KernelResolver r;
  CHECK(infer(back, in, r).output.same_data(infer(q, in, r).output));
}

TEST_CASE("model_hash tracks structure and weights") {
  testutil::Rng rng(17);
  Graph g = identity_conv_graph(2, 2, 2);
  uint64_t h0 = model_hash(g);
  CHECK(model_hash(g) == h0);

  Graph g2 = g;
  g2.layers[0].weights->f32()[0] += 1.0f;
  CHECK(model_hash(g2) != h0);

  Graph g3 = g;
  g3.layers[0].conv();  // keep type checks honest
  std::get<ConvParams>(g3.layers[0].params).act = Activation::ReLU;
  CHECK(model_hash(g3) != h0);
}

TEST_CASE("resolvers agree bit for bit on random int8 graphs") {
  testutil::Rng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = testutil::random_float_graph(rng);
    Graph q = testutil::quantized_twin(rng, g, trial % 2 == 0);
    Tensor in = testutil::rand_f32(rng, q.input_shape);
    KernelResolver ref, opt;
    ref.kind = ResolverKind::Reference;
    opt.kind = ResolverKind::Optimized;
    InferResult a = infer(q, in, ref, CaptureMode::PerLayer);
    InferResult b = infer(q, in, opt, CaptureMode::PerLayer);
    REQUIRE(a.layer_outputs.size() == b.layer_outputs.size());
    for (size_t i = 0; i < a.layer_outputs.size(); ++i)
      CHECK(a.layer_outputs[i].same_data(b.layer_outputs[i]));
  }
}

TEST_CASE("resolvers agree within float tolerance on random float graphs") {
  testutil::Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = testutil::random_float_graph(rng);
    Tensor in = testutil::rand_f32(rng, g.input_shape);
    KernelResolver ref, opt;
    ref.kind = ResolverKind::Reference;
    opt.kind = ResolverKind::Optimized;
    auto a = infer(g, in, ref).output;
    auto b = infer(g, in, opt).output;
    auto av = a.f32();
    auto bv = b.f32();
    REQUIRE(av.size() == bv.size());
    for (size_t i = 0; i < av.size(); ++i)
      CHECK(std::abs(av[i] - bv[i]) <=
            1e-5 * std::max({std::abs(av[i]), std::abs(bv[i]), 1.0f}));
  }
}

TEST_CASE("shape inference agrees with execution") {
  testutil::Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = testutil::random_float_graph(rng);
    Graph q = testutil::quantized_twin(rng, g, false);
    for (const Graph* gp : {&g, &q}) {
      auto io = infer_shapes(*gp);
      KernelResolver r;
      Tensor in = testutil::rand_f32(rng, gp->input_shape);
      InferResult res = infer(*gp, in, r, CaptureMode::PerLayer);
      REQUIRE(io.size() == res.layer_outputs.size());
      for (size_t i = 0; i < io.size(); ++i) {
        CHECK(io[i].shape == res.layer_outputs[i].shape());
        CHECK(io[i].dtype == res.layer_outputs[i].dtype());
      }
    }
  }
}

TEST_CASE("slow kernel fault repeats work without changing outputs") {
  testutil::Rng rng(21);
  Graph g;
  g.name = "slow";
  g.input_shape = {24, 24, 6};
  LayerSpec l;
  l.index = 0;
  l.name = "c";
  l.type = LayerType::Conv2D;
  ConvParams p;
  p.kh = p.kw = 3;
  l.params = p;
  l.weights = testutil::rand_f32(rng, {8, 3, 3, 6});
  l.bias = testutil::rand_f32(rng, {8});
  g.layers.push_back(l);
  g.output_layer = 0;
  g.validate();
  Tensor in = testutil::rand_f32(rng, g.input_shape);

  auto median_latency = [&](int factor) {
    KernelResolver r;
    r.kind = ResolverKind::Reference;
    if (factor > 1)
      r.faults = {fault_from_string("slow=" + std::to_string(factor) + "@0")};
    std::vector<int64_t> ts;
    Tensor out;
    for (int rep = 0; rep < 3; ++rep) {
      InferResult res = infer(g, in, r);
      ts.push_back(res.layer_latency_ns[0]);
      out = res.output;
    }
    std::sort(ts.begin(), ts.end());
    return std::pair{ts[1], out};
  };

  auto [t1, out1] = median_latency(1);
  auto [t50, out50] = median_latency(50);
  CHECK(out50.same_data(out1));
  CHECK(t50 >= 5 * t1);
}

TEST_CASE("per-layer latencies sum close to the total on deep graphs") {
  testutil::Rng rng(22);
  Graph g;
  g.name = "deep";
  g.input_shape = {16, 16, 8};
  for (int i = 0; i < 22; ++i) {
    LayerSpec l;
    l.index = i;
    l.name = "c" + std::to_string(i);
    l.type = LayerType::Conv2D;
    ConvParams p;
    p.kh = p.kw = 3;
    p.pad_top = p.pad_bottom = p.pad_left = p.pad_right = 1;
    l.params = p;
    l.weights = testutil::rand_f32(rng, {8, 3, 3, 8}, -0.2, 0.2);
    l.bias = testutil::rand_f32(rng, {8});
    g.layers.push_back(l);
  }
  g.output_layer = 21;
  g.validate();

  KernelResolver r;
  InferResult res = infer(g, testutil::rand_f32(rng, g.input_shape), r);
  int64_t sum = 0;
  for (int64_t t : res.layer_latency_ns) sum += t;
  CHECK(res.total_latency_ns > 0);
  CHECK(std::abs(static_cast<double>(sum - res.total_latency_ns)) <=
        0.10 * static_cast<double>(res.total_latency_ns));
}

TEST_CASE("memory accounting is consistent") {
  testutil::Rng rng(23);
  Graph g = testutil::random_float_graph(rng);
  KernelResolver r;
  InferResult res = infer(g, testutil::rand_f32(rng, g.input_shape), r);
  CHECK(res.memory_bytes == estimate_memory_bytes(g));
  int64_t weight_bytes = 0;
  for (const auto& l : g.layers)
    if (l.weights) weight_bytes += static_cast<int64_t>(l.weights->byte_size());
  CHECK(res.memory_bytes > weight_bytes);
}

TEST_CASE("quantize_graph brackets the graph and keeps identity outputs close") {
  testutil::Rng rng(24);
  Graph g = identity_conv_graph(2, 2, 2);
  std::vector<Tensor> calib;
  calib.push_back(Tensor::from_f32({2, 2, 2}, {1, -1, 1, -1, 1, -1, 1, -1}));
  for (int i = 0; i < 3; ++i) calib.push_back(testutil::rand_f32(rng, {2, 2, 2}));

  Graph q = quantize_graph(g, calib);
  REQUIRE(q.layers.size() == 3);
  CHECK(q.layers.front().type == LayerType::Quantize);
  CHECK(q.layers.back().type == LayerType::Dequantize);

  double s_in = q.layers[0].out_quant->scale[0];
  double s_out = q.layers[1].out_quant->scale[0];
  double bound = 0.5 * (s_in + s_out) + 1e-9;
  KernelResolver r;
  Tensor in = testutil::rand_f32(rng, {2, 2, 2});
  auto want = in.f32();
  InferResult res = infer(q, in, r);
  auto got = res.output.f32();
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(std::abs(got[i] - want[i]) <= bound);
}

TEST_CASE("per-tensor weights squash a faint channel; per-channel keeps it") {
  // Depthwise weights: channel 0 at unit magnitude, channel 1 a thousandth of
  // it. One shared weight scale rounds every channel-1 weight to zero.
  testutil::Rng rng(25);
  Graph g;
  g.name = "squash";
  g.input_shape = {4, 4, 2};
  LayerSpec l;
  l.index = 0;
  l.name = "dw";
  l.type = LayerType::DepthwiseConv2D;
  ConvParams p;
  p.kh = p.kw = 3;
  p.pad_top = p.pad_bottom = p.pad_left = p.pad_right = 1;
  l.params = p;
  std::vector<float> wv(18);
  for (int i = 0; i < 9; ++i) wv[static_cast<size_t>(i)] = (i == 0) ? 1.0f : static_cast<float>(testutil::runif(rng, -1.0, 1.0));
  for (int i = 9; i < 18; ++i) wv[static_cast<size_t>(i)] = static_cast<float>(testutil::runif(rng, -0.001, 0.001));
  wv[9] = 0.001f;
  l.weights = Tensor::from_f32({2, 3, 3}, wv);
  g.layers.push_back(l);
  g.output_layer = 0;
  g.validate();

  // Channel-1 inputs are large so its (tiny-weight) outputs are comparable to
  // channel 0 and survive the shared activation scale.
  std::vector<Tensor> calib;
  for (int i = 0; i < 4; ++i) {
    std::vector<float> v(32);
    for (size_t j = 0; j < 32; j += 2) {
      v[j] = static_cast<float>(testutil::runif(rng, -1.0, 1.0));
      v[j + 1] = static_cast<float>(testutil::runif(rng, -1000.0, 1000.0));
    }
    calib.push_back(Tensor::from_f32({4, 4, 2}, v));
  }

  KernelResolver r;
  Tensor probe = calib[0];
  InferResult float_res = infer(g, probe, r);
  auto float_out = float_res.output.f32();

  Graph per_tensor = quantize_graph(g, calib, {.per_channel = false});
  InferResult pt_res = infer(per_tensor, probe, r);
  auto pt = pt_res.output.f32();
  double pt_ch1_mag = 0.0;
  for (size_t i = 1; i < pt.size(); i += 2) pt_ch1_mag += std::abs(pt[i]);
  CHECK(pt_ch1_mag == 0.0);

  Graph per_channel = quantize_graph(g, calib, {.per_channel = true});
  InferResult pc_res = infer(per_channel, probe, r);
  auto pc = pc_res.output.f32();
  double worst = 0.0, float_mag = 0.0;
  for (size_t i = 1; i < pc.size(); i += 2) {
    worst = std::max(worst, static_cast<double>(std::abs(pc[i] - float_out[i])));
    float_mag = std::max(float_mag, static_cast<double>(std::abs(float_out[i])));
  }
  CHECK(float_mag > 0.5);  // the channel genuinely carries signal
  CHECK(worst < 0.2);      // and per-channel scales reconstruct it

  auto steps = weight_channel_min_steps(per_tensor);
  // Index 1 is the depthwise layer (0 is the inserted Quantize).
  CHECK(steps[1] == 0.0);
  auto steps_pc = weight_channel_min_steps(per_channel);
  CHECK(steps_pc[1] > 8.0);
}

TEST_CASE("quantize_graph rejects an empty calibration set") {
  Graph g = identity_conv_graph(2, 2, 2);
  CHECK_THROWS_AS(quantize_graph(g, {}), Error);
}
