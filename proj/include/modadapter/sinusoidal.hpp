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

#include <cmath>

#include "modadapter/errors.hpp"
#include "modadapter/tensor.hpp"

namespace modadapter {

/// Interleaved sinusoidal features [sin(p f_0), cos(p f_0), sin(p f_1), ...]
/// with f_k = base^(-2k/dim). `dim` must be even.
template <typename T>
RowVectorT<T> sinusoidal_embedding(T position, Index dim, T base = T(10000)) {
  if (dim <= 0 || dim % 2 != 0) throw RangeError("sinusoidal embedding width must be even and positive");
  RowVectorT<T> out(dim);
  for (Index k = 0; k < dim / 2; ++k) {
    using std::cos;
    using std::pow;
    using std::sin;
    const T freq = pow(base, -T(2 * k) / T(dim));
    out(2 * k) = sin(position * freq);
    out(2 * k + 1) = cos(position * freq);
  }
  return out;
}

/// One embedding per row for positions 0..count-1.
template <typename T>
MatrixT<T> sinusoidal_table(Index count, Index dim, T base = T(10000)) {
  MatrixT<T> table(count, dim);
  for (Index p = 0; p < count; ++p) table.row(p) = sinusoidal_embedding<T>(T(p), dim, base);
  return table;
}

}  // namespace modadapter
