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
#include <vector>

#include "modadapter/tensor.hpp"

namespace modadapter {

struct AdamWConfig {
  Scalar learning_rate = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
  Scalar weight_decay = 1e-2;
};

/// Moment buffers and step counter of one AdamW run.
struct OptimState {
  AdamWConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
};

OptimState make_optim_state(std::span<Tensor* const> params, const AdamWConfig& config);

/// One bias-corrected AdamW update with decoupled weight decay, reading each
/// parameter's gradient buffer. A parameter without a gradient buffer is
/// treated as having a zero gradient.
void adamw_step(std::span<Tensor* const> params, OptimState& state);

void zero_grads(std::span<Tensor* const> params);

/// Convenience owner of a parameter list and its optimizer state.
class AdamW {
 public:
  AdamW(std::vector<Tensor*> params, const AdamWConfig& config);

  void step() { adamw_step(params_, state_); }
  void zero_grad() { zero_grads(params_); }

  const OptimState& state() const { return state_; }
  std::span<Tensor* const> params() const { return params_; }

 private:
  std::vector<Tensor*> params_;
  OptimState state_;
};

}  // namespace modadapter
