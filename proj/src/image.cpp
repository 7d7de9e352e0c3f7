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

#include "exray/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "exray/common.hpp"

namespace exray {

const char* channel_order_name(ChannelOrder o) {
  return o == ChannelOrder::RGB ? "RGB" : "BGR";
}

ChannelOrder channel_order_from_name(const std::string& s) {
  if (s == "RGB") return ChannelOrder::RGB;
  if (s == "BGR") return ChannelOrder::BGR;
  throw Error("unknown channel order '" + s + "'");
}

Image make_image(int h, int w, int channels, ChannelOrder order) {
  if (h <= 0 || w <= 0) throw Error("image dimensions must be positive");
  if (channels != 1 && channels != 3) throw Error("image must have 1 or 3 channels");
  Image img;
  img.h = h;
  img.w = w;
  img.channels = channels;
  img.order = order;
  img.data.assign(static_cast<size_t>(h) * w * channels, 0);
  return img;
}

namespace {

// PPM header tokenizer. Tracks the cursor so errors can name the byte offset.
struct PpmCursor {
  std::span<const uint8_t> bytes;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error("ppm: " + what + " at byte " + std::to_string(pos));
  }

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      uint8_t c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(c)) {
        ++pos;
      } else {
        return;
      }
    }
  }

  int read_int(const char* field) {
    skip_space_and_comments();
    if (pos >= bytes.size()) fail(std::string("missing ") + field);
    if (!std::isdigit(bytes[pos])) fail(std::string("expected digit for ") + field);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000) fail(std::string(field) + " out of range");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

}  // namespace

Image decode_ppm(std::span<const uint8_t> bytes) {
  PpmCursor cur{bytes};
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') cur.fail("not a P6 file");
  cur.pos = 2;
  int w = cur.read_int("width");
  int h = cur.read_int("height");
  int maxval = cur.read_int("maxval");
  if (w <= 0 || h <= 0) cur.fail("non-positive dimensions");
  if (maxval != 255) cur.fail("maxval must be 255");
  // Exactly one whitespace byte separates the header from the raster.
  if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos]))
    cur.fail("missing separator before pixel data");
  ++cur.pos;
  size_t need = static_cast<size_t>(h) * w * 3;
  if (bytes.size() - cur.pos < need) cur.fail("truncated pixel data");
  if (bytes.size() - cur.pos > need) {
    cur.pos += need;
    cur.fail("trailing bytes after pixel data");
  }
  Image img = make_image(h, w, 3, ChannelOrder::RGB);
  std::memcpy(img.data.data(), bytes.data() + cur.pos, need);
  return img;
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::vector<uint8_t> encode_ppm(const Image& img) {
  if (img.channels != 3) throw Error("ppm encode needs 3 channels");
  std::string header = "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

void save_ppm(const std::filesystem::path& path, const Image& img) {
  auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

Image convert_channel_order(const Image& img, ChannelOrder target) {
  if (img.channels != 3) throw Error("channel order conversion needs 3 channels");
  Image out = img;
  out.order = target;
  if (img.order == target) return out;
  size_t pixels = static_cast<size_t>(img.h) * img.w;
  for (size_t p = 0; p < pixels; ++p) std::swap(out.data[p * 3], out.data[p * 3 + 2]);
  return out;
}

namespace {

uint8_t clamp_round_u8(double v) {
  double r = round_half_away(v);
  return static_cast<uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace

Image resize_bilinear(const Image& img, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) throw Error("resize target must be positive");
  Image out = make_image(target_h, target_w, img.channels, img.order);
  double sy = static_cast<double>(img.h) / target_h;
  double sx = static_cast<double>(img.w) / target_w;
  for (int dy = 0; dy < target_h; ++dy) {
    double fy = (dy + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int ya = std::clamp(y0, 0, img.h - 1);
    int yb = std::clamp(y0 + 1, 0, img.h - 1);
    for (int dx = 0; dx < target_w; ++dx) {
      double fx = (dx + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int xa = std::clamp(x0, 0, img.w - 1);
      int xb = std::clamp(x0 + 1, 0, img.w - 1);
      for (int c = 0; c < img.channels; ++c) {
        double top = img.at(ya, xa, c) * (1.0 - wx) + img.at(ya, xb, c) * wx;
        double bot = img.at(yb, xa, c) * (1.0 - wx) + img.at(yb, xb, c) * wx;
        out.at(dy, dx, c) = clamp_round_u8(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Image resize_area(const Image& img, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) throw Error("resize target must be positive");
  Image out = make_image(target_h, target_w, img.channels, img.order);
  double sy = static_cast<double>(img.h) / target_h;
  double sx = static_cast<double>(img.w) / target_w;
  for (int dy = 0; dy < target_h; ++dy) {
    double y_lo = dy * sy;
    double y_hi = (dy + 1) * sy;
    int y_first = static_cast<int>(std::floor(y_lo));
    int y_last = std::min(static_cast<int>(std::ceil(y_hi)), img.h);
    for (int dx = 0; dx < target_w; ++dx) {
      double x_lo = dx * sx;
      double x_hi = (dx + 1) * sx;
      int x_first = static_cast<int>(std::floor(x_lo));
      int x_last = std::min(static_cast<int>(std::ceil(x_hi)), img.w);
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        double area = 0.0;
        for (int y = y_first; y < y_last; ++y) {
          double cov_y = std::min<double>(y + 1, y_hi) - std::max<double>(y, y_lo);
          if (cov_y <= 0) continue;
          for (int x = x_first; x < x_last; ++x) {
            double cov_x = std::min<double>(x + 1, x_hi) - std::max<double>(x, x_lo);
            if (cov_x <= 0) continue;
            acc += img.at(y, x, c) * cov_y * cov_x;
            area += cov_y * cov_x;
          }
        }
        out.at(dy, dx, c) = clamp_round_u8(acc / area);
      }
    }
  }
  return out;
}

Image rotate(const Image& img, int degrees) {
  int d = degrees % 360;
  if (d < 0) d += 360;
  if (d == 0) return img;
  if (d != 90 && d != 180 && d != 270) throw Error("rotation must be a multiple of 90 degrees");
  int oh = (d == 180) ? img.h : img.w;
  int ow = (d == 180) ? img.w : img.h;
  Image out = make_image(oh, ow, img.channels, img.order);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      int dy, dx;
      if (d == 90) {  // clockwise: top row becomes right column
        dy = x;
        dx = img.h - 1 - y;
      } else if (d == 180) {
        dy = img.h - 1 - y;
        dx = img.w - 1 - x;
      } else {
        dy = img.w - 1 - x;
        dx = y;
      }
      for (int c = 0; c < img.channels; ++c) out.at(dy, dx, c) = img.at(y, x, c);
    }
  }
  return out;
}

Tensor image_to_tensor(const Image& img) {
  QuantParams qp;
  qp.scheme = QuantScheme::PerTensorAffine;
  qp.scale = {1.0};
  qp.zero_point = 0;
  qp.calib_min = {0.0};
  qp.calib_max = {255.0};
  return Tensor::from_u8({img.h, img.w, img.channels}, img.data, qp);
}

Image image_from_tensor(const Tensor& t, ChannelOrder order) {
  if (t.dtype() != DType::U8) throw Error("image tensor must be u8");
  const Shape& s = t.shape();
  if (s.size() != 3 || (s[2] != 1 && s[2] != 3))
    throw Error("image tensor must be [h, w, c] with c in {1, 3}");
  Image img = make_image(static_cast<int>(s[0]), static_cast<int>(s[1]),
                         static_cast<int>(s[2]), order);
  auto v = t.u8();
  std::copy(v.begin(), v.end(), img.data.begin());
  return img;
}

}  // namespace exray
