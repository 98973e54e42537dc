// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "oodk/binary_io.hpp"
#include "oodk/common.hpp"

namespace oodk {

/// H×W×C raster, row-major with interleaved channels, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c),
             fill) {
    require(h >= 1 && w >= 1, ErrorCode::input, "image: empty dimensions");
    require(c == 1 || c == 3, ErrorCode::input, "image: channels must be 1 or 3");
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }

  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  void clamp01() {
    for (double& v : data) v = std::clamp(v, 0.0, 1.0);
  }

  bool operator==(const Image&) const = default;
};

inline std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Binary PNM: P6 for 3 channels, P5 for 1 channel, 8-bit.
inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(quantize8(v));
  return out;
}

inline Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > 1 << 20) fail(ErrorCode::format, "ppm: header value too large");
    }
    if (!any) fail(ErrorCode::format, "ppm: malformed header");
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
    fail(ErrorCode::format, "ppm: bad magic (expected P6 or P5)");
  const int channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w < 1 || h < 1) fail(ErrorCode::format, "ppm: empty image");
  if (maxval != 255) fail(ErrorCode::format, "ppm: only 8-bit maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(ErrorCode::format, "ppm: malformed header");
  ++pos;
  Image img(h, w, channels);
  if (bytes.size() - pos < img.data.size()) fail(ErrorCode::format, "ppm: truncated pixel data");
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[pos + i] / 255.0;
  return img;
}

inline Image read_ppm(const std::string& path) { return decode_ppm(io::read_file(path)); }
inline void write_ppm(const std::string& path, const Image& img) {
  io::write_file(path, encode_ppm(img));
}

}  // namespace oodk
