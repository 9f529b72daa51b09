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

#include <functional>
#include <span>

#include "modadapter/autodiff.hpp"

namespace modadapter {

/// Builds a scalar loss on the given tape. Parameters must enter through
/// tape.leaf(); the function is evaluated once with recording for the
/// analytic gradient and twice per parameter element without.
using ScalarGraphFn = std::function<Var(Tape&)>;

/// Central-difference gradient check. Returns the maximum over all elements
/// of |analytic - numeric| / max(1, |numeric|). The parameters' gradient
/// buffers and requires_grad flags are restored afterwards.
Scalar grad_check(const ScalarGraphFn& f, std::span<Tensor* const> params, Scalar eps = 1e-5);

}  // namespace modadapter
