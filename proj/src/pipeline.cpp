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

#include "exray/pipeline.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "exray/common.hpp"

namespace exray {

using nlohmann::json;

const char* resizer_name(Resizer r) {
  return r == Resizer::Bilinear ? "bilinear" : "area";
}

Resizer resizer_from_name(const std::string& s) {
  if (s == "bilinear") return Resizer::Bilinear;
  if (s == "area") return Resizer::Area;
  throw Error("unknown resizer '" + s + "'");
}

void PipelineSpec::validate() const {
  int d = rotation % 360;
  if (d < 0) d += 360;
  if (d % 90 != 0) throw Error("pipeline: rotation must be a multiple of 90");
  if (target_h <= 0 || target_w <= 0) throw Error("pipeline: target size must be positive");
  if (!(norm_lo < norm_hi)) throw Error("pipeline: norm_lo must be below norm_hi");
}

std::string pipeline_to_json(const PipelineSpec& spec) {
  json j;
  j["rotation"] = spec.rotation;
  j["channel_order"] = channel_order_name(spec.channel_order);
  j["resizer"] = resizer_name(spec.resizer);
  j["target_h"] = spec.target_h;
  j["target_w"] = spec.target_w;
  j["norm_lo"] = spec.norm_lo;
  j["norm_hi"] = spec.norm_hi;
  return j.dump(2);
}

PipelineSpec pipeline_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("pipeline: ") + e.what());
  }
  if (!j.is_object()) throw Error("pipeline: top level must be an object");
  static const std::set<std::string> known = {
      "rotation", "channel_order", "resizer", "target_h",
      "target_w", "norm_lo",       "norm_hi"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw Error("pipeline: unknown key '" + key + "'");
  for (const auto& key : known)
    if (!j.contains(key)) throw Error("pipeline: missing key '" + key + "'");
  PipelineSpec spec;
  try {
    spec.rotation = j.at("rotation").get<int>();
    spec.channel_order = channel_order_from_name(j.at("channel_order").get<std::string>());
    spec.resizer = resizer_from_name(j.at("resizer").get<std::string>());
    spec.target_h = j.at("target_h").get<int>();
    spec.target_w = j.at("target_w").get<int>();
    spec.norm_lo = j.at("norm_lo").get<double>();
    spec.norm_hi = j.at("norm_hi").get<double>();
  } catch (const json::exception& e) {
    throw Error(std::string("pipeline: ") + e.what());
  }
  spec.validate();
  return spec;
}

PipelineSpec load_pipeline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return pipeline_from_json(text);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void save_pipeline(const std::filesystem::path& path, const PipelineSpec& spec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << pipeline_to_json(spec) << "\n";
}

uint64_t pipeline_hash(const PipelineSpec& spec) {
  std::string canon = json::parse(pipeline_to_json(spec)).dump();
  return fnv1a64(canon.data(), canon.size());
}

Tensor normalize_image(const Image& img, double lo, double hi) {
  std::vector<float> out(img.data.size());
  double span = hi - lo;
  for (size_t i = 0; i < img.data.size(); ++i)
    out[i] = static_cast<float>(img.data[i] / 255.0 * span + lo);
  return Tensor::from_f32({img.h, img.w, img.channels}, out);
}

Tensor run_pipeline(const Image& raw, const PipelineSpec& spec) {
  spec.validate();
  Image img = rotate(raw, spec.rotation);
  img = convert_channel_order(img, spec.channel_order);
  if (spec.resizer == Resizer::Bilinear)
    img = resize_bilinear(img, spec.target_h, spec.target_w);
  else
    img = resize_area(img, spec.target_h, spec.target_w);
  return normalize_image(img, spec.norm_lo, spec.norm_hi);
}

}  // namespace exray
