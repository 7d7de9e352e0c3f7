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

#ifndef EXRAY_IMAGE_HPP_
#define EXRAY_IMAGE_HPP_

#include <filesystem>

#include "exray/tensor.hpp"

namespace exray {

enum class ChannelOrder { RGB, BGR };

const char* channel_order_name(ChannelOrder o);
ChannelOrder channel_order_from_name(const std::string& s);

/// 8-bit interleaved raster, row-major, 1 or 3 channels.
struct Image {
  int h = 0;
  int w = 0;
  int channels = 0;
  ChannelOrder order = ChannelOrder::RGB;
  std::vector<uint8_t> data;

  uint8_t at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * w + x) * channels + c];
  }
  uint8_t& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * w + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

Image make_image(int h, int w, int channels, ChannelOrder order = ChannelOrder::RGB);

/// Binary PPM (P6, maxval 255). Parse errors report the byte offset.
Image decode_ppm(std::span<const uint8_t> bytes);
Image load_ppm(const std::filesystem::path& path);
std::vector<uint8_t> encode_ppm(const Image& img);
void save_ppm(const std::filesystem::path& path, const Image& img);

/// Per-pixel channel permutation (RGB <-> BGR). Requires 3 channels.
Image convert_channel_order(const Image& img, ChannelOrder target);

/// Half-pixel-center bilinear: src = (dst + 0.5) * scale - 0.5, edge clamped,
/// channels independent, rounded half away from zero.
Image resize_bilinear(const Image& img, int target_h, int target_w);

/// Area average: each destination pixel is the mean of its exact (possibly
/// fractional) source rectangle, rounded half away from zero.
Image resize_area(const Image& img, int target_h, int target_w);

/// Lossless clockwise rotation; degrees in {0, 90, 180, 270}.
Image rotate(const Image& img, int degrees);

/// U8 tensor [h, w, c] carrying the identity affine range [0, 255].
Tensor image_to_tensor(const Image& img);
Image image_from_tensor(const Tensor& t, ChannelOrder order = ChannelOrder::RGB);

}  // namespace exray

#endif  // EXRAY_IMAGE_HPP_
