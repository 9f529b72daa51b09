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

#include "modadapter/image.hpp"

#include "modadapter/errors.hpp"

namespace modadapter {

Tensor Image::to_tensor() const {
  return Tensor(Shape{static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3}, rgb);
}

Image Image::from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.shape()[2] != 3) {
    throw ShapeError("image tensor must have shape [H, W, 3], got " + shape_string(t.shape()));
  }
  Image img(static_cast<Index>(t.shape()[0]), static_cast<Index>(t.shape()[1]));
  img.rgb = t.value();
  return img;
}

Matrix patchify(const Image& image, Index patch) {
  if (patch <= 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not divisible by patch size " + std::to_string(patch));
  }
  const Index ph = image.height / patch;
  const Index pw = image.width / patch;
  Matrix out(ph * pw, patch * patch * 3);
  for (Index py = 0; py < ph; ++py) {
    for (Index px = 0; px < pw; ++px) {
      const Index row = py * pw + px;
      Index col = 0;
      for (Index dy = 0; dy < patch; ++dy) {
        for (Index dx = 0; dx < patch; ++dx) {
          for (Index c = 0; c < 3; ++c) out(row, col++) = image(py * patch + dy, px * patch + dx, c);
        }
      }
    }
  }
  return out;
}

Image unpatchify(const Matrix& patches, Index height, Index width, Index patch) {
  if (patch <= 0 || height % patch != 0 || width % patch != 0) {
    throw ShapeError("unpatchify: dimensions not divisible by patch size");
  }
  const Index ph = height / patch;
  const Index pw = width / patch;
  if (patches.rows() != ph * pw || patches.cols() != patch * patch * 3) {
    throw ShapeError("unpatchify: patch matrix does not match image dimensions");
  }
  Image img(height, width);
  for (Index py = 0; py < ph; ++py) {
    for (Index px = 0; px < pw; ++px) {
      const Index row = py * pw + px;
      Index col = 0;
      for (Index dy = 0; dy < patch; ++dy) {
        for (Index dx = 0; dx < patch; ++dx) {
          for (Index c = 0; c < 3; ++c) img(py * patch + dy, px * patch + dx, c) = patches(row, col++);
        }
      }
    }
  }
  return img;
}

}  // namespace modadapter
