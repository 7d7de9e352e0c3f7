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

#ifndef EXRAY_VALIDATE_HPP_
#define EXRAY_VALIDATE_HPP_

#include "exray/trace.hpp"

namespace exray {

/// The two traces describe different computations (layer counts or shapes
/// disagree), so per-layer comparison is off the table. Reported as a
/// finding rather than an infrastructure failure.
struct StructuralError : Error {
  using Error::Error;
};

/// Per-layer drift between an edge trace and its reference. Int8 outputs are
/// dequantized before differencing; the normalizer is always the reference
/// side's output range.
struct LayerDivergence {
  int layer_index = -1;
  std::string layer_type;
  double rmse = 0.0;
  double scale = 0.0;     // max - min of the reference layer output
  double rmse_hat = 0.0;  // rmse / scale
  bool degenerate = false;  // scale was 0; rmse_hat not meaningful
};

struct DivergenceVerdict {
  bool preprocessing = false;  // the model input itself diverged
  std::optional<int> layer;
  bool found() const { return preprocessing || layer.has_value(); }
};

struct AccuracySummary {
  int frames = 0;
  double agreement = 1.0;  // edge vs reference top-1
  std::optional<double> edge_top1;  // vs labels, when labels exist
  std::optional<double> ref_top1;
};

struct AssertionResult {
  std::string name;
  std::string verdict;  // "pass" | "fail" | "inapplicable" | "error"
  std::string evidence;
};

struct LatencyTypeRow {
  std::string layer_type;
  int64_t edge_ns = 0;
  int64_t ref_ns = 0;
};

struct Straggler {
  int layer_index = -1;
  std::string layer_type;
  double edge_share = 0.0;
  double ref_share = 0.0;
  double factor = 0.0;
};

struct LatencySummary {
  std::vector<LatencyTypeRow> by_type;
  std::vector<Straggler> stragglers;
  int64_t edge_total_ns = 0;
  int64_t ref_total_ns = 0;
};

struct ValidationThresholds {
  double jump_delta = 0.05;
  double jump_ratio = 3.0;
  double agreement_threshold = 0.99;  // below this the layer stage kicks in
  double straggler_factor = 5.0;
  double straggler_min_share = 0.05;  // ignore layers that are noise either way
  bool force_layer_stage = false;
};

struct FramePair {
  std::string frame_id;
  std::vector<const TraceRecord*> edge;
  std::vector<const TraceRecord*> ref;
};

struct Alignment {
  std::vector<FramePair> pairs;
  std::vector<std::string> edge_only;
  std::vector<std::string> ref_only;
};

/// Pairs frames by frame_id. Throws on duplicate output records for one id
/// or zero overlap.
Alignment align(const TraceData& edge, const TraceData& ref);

AccuracySummary accuracy_check(const TraceData& edge, const TraceData& ref,
                               const Alignment& al,
                               const std::map<std::string, int>* labels);

/// Divergence of the logged model inputs, reported like a layer with index
/// -1. Missing input records yield nullopt.
std::optional<LayerDivergence> input_divergence(const TraceData& edge, const TraceData& ref,
                                                const Alignment& al);

/// One entry per layer, pooled over all aligned frames. Throws an Error on
/// structural mismatch (different layer counts or shapes).
std::vector<LayerDivergence> per_layer_rmse(const TraceData& edge, const TraceData& ref,
                                            const Alignment& al);

/// First layer whose rmse_hat jumps by jump_delta over the running maximum,
/// or exceeds jump_ratio times a non-negligible running maximum. A diverged
/// model input short-circuits to "preprocessing".
DivergenceVerdict localize_divergence(const std::optional<LayerDivergence>& input,
                                      const std::vector<LayerDivergence>& series,
                                      double jump_delta = 0.05, double jump_ratio = 3.0);

LatencySummary latency_report(const TraceData& edge, const TraceData& ref,
                              const Alignment& al, double straggler_factor = 5.0,
                              double straggler_min_share = 0.05);

/// The built-in root-cause suite: channel_order, normalization, resize,
/// rotation, quant_resolution. Verdicts aggregate over frames: fail when
/// most applicable frames fail, pass when any frame passes cleanly.
std::vector<AssertionResult> run_builtin_assertions(const TraceData& edge,
                                                    const TraceData& ref,
                                                    const Alignment& al);

/// External assertion: an executable called with the two trace directories
/// as argv[1]/argv[2] and the aligned frame ids on stdin, answering one JSON
/// object {"name", "verdict", "evidence"} on stdout.
AssertionResult run_external_assertion(const std::filesystem::path& exe,
                                       const TraceData& edge, const TraceData& ref,
                                       const Alignment& al);

/// One executable path per line; '#' starts a comment.
std::vector<std::filesystem::path> load_assertion_list(const std::filesystem::path& file);

struct ValidationReport {
  AccuracySummary accuracy;
  bool layer_stage_ran = false;
  std::optional<LayerDivergence> input_div;
  std::vector<LayerDivergence> layers;
  DivergenceVerdict divergence;
  LatencySummary latency;
  std::vector<AssertionResult> assertions;
  std::vector<std::string> unmatched_edge;
  std::vector<std::string> unmatched_ref;
  bool structural_mismatch = false;
  std::string structural_note;
  int findings = 0;

  /// 0 clean, 1 findings (failed assertion or localized divergence).
  int exit_code() const;
};

/// Stage 1 accuracy, stage 2 layer drill-down (on disagreement or when
/// forced), stage 3 assertions. Always returns a report; IO problems throw.
ValidationReport run_validation(const TraceData& edge, const TraceData& ref,
                                const std::map<std::string, int>* labels,
                                const std::vector<std::filesystem::path>& assertion_exes,
                                const ValidationThresholds& th = {});

std::string report_to_json(const ValidationReport& r);

}  // namespace exray

#endif  // EXRAY_VALIDATE_HPP_
