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

#include "modadapter/optim.hpp"

#include <cmath>

#include "modadapter/errors.hpp"

namespace modadapter {

OptimState make_optim_state(std::span<Tensor* const> params, const AdamWConfig& config) {
  OptimState state;
  state.config = config;
  for (const Tensor* p : params) {
    state.first_moment.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
    state.second_moment.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
  }
  return state;
}

void adamw_step(std::span<Tensor* const> params, OptimState& state) {
  if (params.size() != state.first_moment.size()) {
    throw ShapeError("adamw_step: parameter count differs from optimizer state");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& v = params[i]->value();
    if (v.rows() != state.first_moment[i].rows() || v.cols() != state.first_moment[i].cols()) {
      throw ShapeError("adamw_step: parameter " + std::to_string(i) + " shape changed");
    }
    if (params[i]->has_grad()) {
      const Matrix& g = params[i]->grad();
      if (g.rows() != v.rows() || g.cols() != v.cols()) {
        throw ShapeError("adamw_step: gradient shape mismatch for parameter " + std::to_string(i));
      }
      if (!g.allFinite()) {
        throw NumericError("adamw_step: non-finite gradient for parameter " + std::to_string(i));
      }
    }
  }

  const AdamWConfig& c = state.config;
  state.step += 1;
  const auto t = static_cast<Scalar>(state.step);
  const Scalar bc1 = 1.0 - std::pow(c.beta1, t);
  const Scalar bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i]->value();
    Matrix& m = state.first_moment[i];
    Matrix& s = state.second_moment[i];
    if (c.weight_decay != 0.0) p *= (1.0 - c.learning_rate * c.weight_decay);
    if (!params[i]->has_grad()) {
      m *= c.beta1;
      s *= c.beta2;
    } else {
      const Matrix& g = params[i]->grad();
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      s = c.beta2 * s + (1.0 - c.beta2) * g.cwiseProduct(g);
    }
    p.array() -= c.learning_rate * (m.array() / bc1) / ((s.array() / bc2).sqrt() + c.epsilon);
  }
}

void zero_grads(std::span<Tensor* const> params) {
  for (Tensor* p : params) p->zero_grad();
}

AdamW::AdamW(std::vector<Tensor*> params, const AdamWConfig& config)
    : params_(std::move(params)), state_(make_optim_state(params_, config)) {}

}  // namespace modadapter
