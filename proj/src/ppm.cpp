/*
 * Copyright 2026 The ModAdapter Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "modadapter/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "modadapter/errors.hpp"
#include "modadapter/modk.hpp"

namespace modadapter {

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.rows() != image.height * image.width || image.rgb.cols() != 3)
    throw ShapeError("ppm: malformed image");
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (Index i = 0; i < image.rgb.rows(); ++i) {
    for (Index c = 0; c < 3; ++c) {
      const Scalar v = std::clamp(image.rgb(i, c), 0.0, 1.0);
      bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  write_file_atomic(path, bytes);
}

Image read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) throw FormatError("ppm: truncated header in " + path.string());
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
      throw FormatError("ppm: bad header field '" + t + "'");
    return std::stol(t);
  };
  if (token() != "P6") throw FormatError("ppm: not a P6 file: " + path.string());
  const long w = number();
  const long h = number();
  const long maxval = number();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw FormatError("ppm: unsupported header");
  ++pos;  // single whitespace before the raster
  if (bytes.size() < pos + static_cast<std::size_t>(w * h * 3)) throw FormatError("ppm: truncated raster");
  Image img(h, w);
  for (Index i = 0; i < h * w; ++i) {
    for (Index c = 0; c < 3; ++c) img.rgb(i, c) = static_cast<Scalar>(bytes[pos++]) / static_cast<Scalar>(maxval);
  }
  return img;
}

}  // namespace modadapter
