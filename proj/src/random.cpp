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

#include "modadapter/random.hpp"

#include <cmath>
#include <numbers>

namespace modadapter {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

Scalar Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  Scalar u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const Scalar u2 = uniform();
  const Scalar r = std::sqrt(-2.0 * std::log(u1));
  const Scalar theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix Rng::normal_matrix(Index rows, Index cols, Scalar stddev) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal();
  return m;
}

}  // namespace modadapter
