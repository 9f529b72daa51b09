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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "modadapter/tensor.hpp"

namespace modadapter {

struct GradCheckResult {
  std::string name;
  std::uint64_t seed = 0;
  Scalar error = 0;
  Scalar tolerance = 0;
  bool pass() const { return error < tolerance; }
};

inline constexpr Scalar kPrimitiveTolerance = 1e-6;
inline constexpr Scalar kEndToEndTolerance = 1e-4;

/// Finite-difference checks of every differentiable primitive, the adapter
/// pretraining objective and a one-block backbone noise-prediction loss, once
/// per seed, on miniature shapes.
std::vector<GradCheckResult> gradient_suite(std::span<const std::uint64_t> seeds);

}  // namespace modadapter
