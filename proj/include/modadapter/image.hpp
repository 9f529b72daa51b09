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

#pragma once

#include "modadapter/tensor.hpp"

namespace modadapter {

/// RGB raster. Pixel (y, x) is row y * width + x of `rgb`; columns are the
/// red, green and blue channels.
struct Image {
  Index height = 0;
  Index width = 0;
  Matrix rgb;

  Image() = default;
  Image(Index h, Index w) : height(h), width(w), rgb(Matrix::Zero(h * w, 3)) {}

  Scalar& operator()(Index y, Index x, Index c) { return rgb(y * width + x, c); }
  Scalar operator()(Index y, Index x, Index c) const { return rgb(y * width + x, c); }

  /// Shape {height, width, 3}.
  Tensor to_tensor() const;
  static Image from_tensor(const Tensor& t);

  bool operator==(const Image& other) const = default;
};

/// Splits an image into non-overlapping p x p patches, one row per patch in
/// raster order; columns are ordered (dy, dx, channel).
Matrix patchify(const Image& image, Index patch);
Image unpatchify(const Matrix& patches, Index height, Index width, Index patch);

}  // namespace modadapter
