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

// Built-in root-cause assertions. Each one looks at logged data for a single
// frame, answers pass / fail / not-my-department, and the suite aggregates
// over frames. They only read traces; nothing here touches live state.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "exray/image.hpp"
#include "validate_detail.hpp"

namespace exray {

namespace {

using detail::as_floats;
using detail::find_record;
using detail::layer_records;

struct FrameVerdict {
  // nullopt = inapplicable for this frame
  std::optional<bool> ok;
  std::string evidence;
};

struct Tally {
  int pass = 0;
  int fail = 0;
  std::map<std::string, int> evidence_count;

  void add(const FrameVerdict& v) {
    if (!v.ok) return;
    if (*v.ok) {
      ++pass;
    } else {
      ++fail;
      ++evidence_count[v.evidence];
    }
  }

  AssertionResult finish(const std::string& name) const {
    AssertionResult r;
    r.name = name;
    int applicable = pass + fail;
    if (applicable == 0) {
      r.verdict = "inapplicable";
      return r;
    }
    if (fail * 2 > applicable) {
      r.verdict = "fail";
      std::string best;
      int best_n = 0;
      for (const auto& [ev, n] : evidence_count)
        if (n > best_n) {
          best = ev;
          best_n = n;
        }
      r.evidence = best + " (" + std::to_string(fail) + "/" + std::to_string(applicable) +
                   " frames)";
      return r;
    }
    r.verdict = "pass";
    return r;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---- channel order ------------------------------------------------------

const char* order_letters(ChannelOrder o) { return o == ChannelOrder::RGB ? "RGB" : "BGR"; }

FrameVerdict frame_channel_order(const Tensor& e, const Tensor& r,
                                 const std::string& ref_letters) {
  FrameVerdict v;
  if (e.shape() != r.shape() || e.shape().empty() || e.shape().back() != 3) return v;
  auto ev = as_floats(e);
  auto rv = as_floats(r);
  size_t pixels = ev.size() / 3;
  // edge channel c matching ref channel m[c]; identity first so a clean
  // frame passes without scanning the rest.
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                  {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& m : perms) {
    bool match = true;
    for (size_t p = 0; p < pixels && match; ++p)
      for (int c = 0; c < 3; ++c)
        if (std::fabs(ev[p * 3 + c] - rv[p * 3 + m[c]]) > 1e-6f) {
          match = false;
          break;
        }
    if (!match) continue;
    bool identity = m[0] == 0 && m[1] == 1 && m[2] == 2;
    v.ok = identity;
    if (!identity) {
      std::string edge_letters = {ref_letters[m[0]], ref_letters[m[1]], ref_letters[m[2]]};
      v.evidence = edge_letters + "->" + ref_letters;
    }
    return v;
  }
  return v;  // no permutation explains it; some other bug
}

// ---- normalization ------------------------------------------------------

FrameVerdict frame_normalization(const Tensor& e, const Tensor& r) {
  FrameVerdict v;
  if (e.shape() != r.shape()) return v;
  auto ev = as_floats(e);
  auto rv = as_floats(r);
  size_t n = ev.size();
  if (n == 0) return v;

  double emin = ev[0], emax = ev[0], rmin = rv[0], rmax = rv[0];
  double se = 0, sr = 0;
  for (size_t i = 0; i < n; ++i) {
    emin = std::min(emin, static_cast<double>(ev[i]));
    emax = std::max(emax, static_cast<double>(ev[i]));
    rmin = std::min(rmin, static_cast<double>(rv[i]));
    rmax = std::max(rmax, static_cast<double>(rv[i]));
    se += ev[i];
    sr += rv[i];
  }
  if (emax - emin < 1e-12 || rmax - rmin < 1e-12) return v;  // flat image

  double me = se / n, mr = sr / n;
  double var_e = 0, cov = 0;
  for (size_t i = 0; i < n; ++i) {
    double de = ev[i] - me, dr = rv[i] - mr;
    var_e += de * de;
    cov += de * dr;
  }
  double a = cov / var_e;
  double b = mr - a * me;
  double sq = 0;
  for (size_t i = 0; i < n; ++i) {
    double resid = rv[i] - (a * ev[i] + b);
    sq += resid * resid;
  }
  double rms = std::sqrt(sq / n);
  if (rms >= 1e-4 * (rmax - rmin)) return v;  // not an affine mismatch

  if (std::fabs(a - 1.0) <= 1e-3 && std::fabs(b) <= 1e-3) {
    v.ok = true;
  } else {
    v.ok = false;
    v.evidence = "ref = " + fmt(a) + " * edge + " + fmt(b) + "; edge range [" + fmt(emin) +
                 ", " + fmt(emax) + "] vs ref [" + fmt(rmin) + ", " + fmt(rmax) + "]";
  }
  return v;
}

// ---- resize / rotation --------------------------------------------------

double rms_diff(const Tensor& a, const Tensor& b) {
  auto av = a.f32();
  auto bv = b.f32();
  double sq = 0;
  for (size_t i = 0; i < av.size(); ++i) {
    double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    sq += d * d;
  }
  return av.empty() ? 0.0 : std::sqrt(sq / av.size());
}

// Recomputes the edge model input from the logged raw image while varying a
// single pipeline stage, and reports which settings reproduce it.
template <typename Setting, typename Apply>
FrameVerdict frame_stage_probe(const Image& raw, const Tensor& edge_in,
                               const PipelineSpec& edge_spec, Setting ref_setting,
                               const std::vector<Setting>& candidates, Apply apply,
                               const std::function<std::string(Setting)>& show) {
  FrameVerdict v;
  double tol = (edge_spec.norm_hi - edge_spec.norm_lo) / 255.0;
  std::vector<Setting> matches;
  for (Setting s : candidates) {
    PipelineSpec probe = edge_spec;
    apply(probe, s);
    Tensor t = run_pipeline(raw, probe);
    if (t.shape() != edge_in.shape()) continue;
    if (rms_diff(t, edge_in) <= tol) matches.push_back(s);
  }
  if (matches.empty()) return v;  // edge input not explained by this stage
  if (std::find(matches.begin(), matches.end(), ref_setting) != matches.end()) {
    v.ok = true;
    return v;
  }
  v.ok = false;
  v.evidence = "edge looks like " + show(matches.front()) + " but the reference expects " +
               show(ref_setting);
  return v;
}

// ---- quant resolution ---------------------------------------------------

struct LayerRange {
  double ref_min = std::numeric_limits<double>::infinity();
  double ref_max = -std::numeric_limits<double>::infinity();
  size_t clipped = 0;
  size_t total = 0;
  double scale = 0;
  double calib_lo = 0, calib_hi = 0;
  bool seen = false;
};

AssertionResult quant_resolution(const TraceData& edge, const TraceData& ref,
                                 const Alignment& al) {
  AssertionResult res;
  res.name = "quant_resolution";
  res.verdict = "inapplicable";

  std::vector<std::string> problems;
  bool checked = false;

  // Weight side: the monitor stored, per layer, the smallest per-channel
  // integer step count. A channel squashed by a shared scale shows up as 0
  // here no matter what the activations look like.
  const nlohmann::json& m = edge.manifest;
  if (m.contains("model") && m["model"].contains("weight_min_steps") &&
      m["model"]["weight_min_steps"].is_array()) {
    const auto& arr = m["model"]["weight_min_steps"];
    for (size_t i = 0; i < arr.size(); ++i) {
      double steps = arr[i].get<double>();
      if (steps < 0) continue;  // layer has no quantized weights
      checked = true;
      if (steps < 8.0)
        problems.push_back("layer " + std::to_string(i) + " (" +
                           detail::manifest_layer_type(m, static_cast<int>(i)) +
                           "): weight channel resolution " + fmt(steps) + " steps");
    }
  }

  // Activation side needs per-layer capture on both traces.
  std::map<int, LayerRange> ranges;
  bool aligned_layers = true;
  for (const auto& p : al.pairs) {
    auto el = layer_records(p.edge);
    auto rl = layer_records(p.ref);
    if (el.size() != rl.size()) {
      aligned_layers = false;
      break;
    }
    for (size_t l = 0; l < el.size(); ++l) {
      if (*el[l]->layer_index != *rl[l]->layer_index) {
        aligned_layers = false;
        break;
      }
      Tensor e = edge.load_blob(*el[l]);
      if (e.dtype() != DType::I8 || !e.quant()) continue;
      const QuantParams& qp = *e.quant();
      if (qp.per_channel() || qp.scale.empty() || qp.calib_min.empty() || qp.calib_max.empty())
        continue;
      Tensor r = ref.load_blob(*rl[l]);
      auto rv = as_floats(r);
      LayerRange& lr = ranges[static_cast<int>(*el[l]->layer_index)];
      lr.seen = true;
      lr.scale = qp.scale[0];
      lr.calib_lo = qp.calib_min[0];
      lr.calib_hi = qp.calib_max[0];
      for (float x : rv) {
        lr.ref_min = std::min(lr.ref_min, static_cast<double>(x));
        lr.ref_max = std::max(lr.ref_max, static_cast<double>(x));
        if (x < lr.calib_lo || x > lr.calib_hi) ++lr.clipped;
      }
      lr.total += rv.size();
    }
    if (!aligned_layers) break;
  }

  if (aligned_layers) {
    for (const auto& [idx, lr] : ranges) {
      if (!lr.seen || lr.total == 0) continue;
      double spread = lr.ref_max - lr.ref_min;
      if (spread <= 0) continue;  // flat reference activations need no resolution
      checked = true;
      double clip_frac = static_cast<double>(lr.clipped) / static_cast<double>(lr.total);
      if (clip_frac > 0.01)
        problems.push_back("layer " + std::to_string(idx) + ": " + fmt(clip_frac * 100) +
                           "% of reference activations fall outside the calibrated range [" +
                           fmt(lr.calib_lo) + ", " + fmt(lr.calib_hi) + "]");
      else if (lr.scale > 0 && spread / lr.scale < 8.0)
        problems.push_back("layer " + std::to_string(idx) + ": activations span only " +
                           fmt(spread / lr.scale) + " quantization steps");
    }
  }

  if (!problems.empty()) {
    res.verdict = "fail";
    std::string ev;
    for (size_t i = 0; i < problems.size(); ++i) {
      if (i) ev += "; ";
      ev += problems[i];
    }
    res.evidence = ev;
  } else if (checked) {
    res.verdict = "pass";
  }
  return res;
}

}  // namespace

std::vector<AssertionResult> run_builtin_assertions(const TraceData& edge,
                                                    const TraceData& ref,
                                                    const Alignment& al) {
  Tally channel, norm, resize, rotation;

  std::optional<PipelineSpec> edge_spec = detail::manifest_pipeline(edge.manifest);
  std::optional<PipelineSpec> ref_spec = detail::manifest_pipeline(ref.manifest);
  std::string ref_letters =
      ref_spec ? order_letters(ref_spec->channel_order) : order_letters(ChannelOrder::RGB);

  for (const auto& p : al.pairs) {
    const TraceRecord* ei = find_record(p.edge, RecordKind::Input, "model_input", p.frame_id);
    const TraceRecord* ri = find_record(p.ref, RecordKind::Input, "model_input", p.frame_id);
    if (ei && ri) {
      Tensor e = edge.load_blob(*ei);
      Tensor r = ref.load_blob(*ri);
      channel.add(frame_channel_order(e, r, ref_letters));
      norm.add(frame_normalization(e, r));

      const TraceRecord* raw_rec =
          find_record(p.edge, RecordKind::Input, "raw_input", p.frame_id);
      if (raw_rec && edge_spec && ref_spec) {
        Image raw = image_from_tensor(edge.load_blob(*raw_rec));
        resize.add(frame_stage_probe<Resizer>(
            raw, e, *edge_spec, ref_spec->resizer, {Resizer::Bilinear, Resizer::Area},
            [](PipelineSpec& s, Resizer rz) { s.resizer = rz; },
            [](Resizer rz) { return std::string(resizer_name(rz)); }));
        rotation.add(frame_stage_probe<int>(
            raw, e, *edge_spec, ((ref_spec->rotation % 360) + 360) % 360, {0, 90, 180, 270},
            [](PipelineSpec& s, int deg) { s.rotation = deg; },
            [](int deg) { return std::to_string(deg) + " degrees"; }));
      }
    }
  }

  std::vector<AssertionResult> out;
  out.push_back(channel.finish("channel_order"));
  out.push_back(norm.finish("normalization"));
  out.push_back(resize.finish("resize"));
  out.push_back(rotation.finish("rotation"));
  out.push_back(quant_resolution(edge, ref, al));
  return out;
}

}  // namespace exray
