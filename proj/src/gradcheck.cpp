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

#include "modadapter/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "modadapter/errors.hpp"

namespace modadapter {

namespace {

Scalar evaluate(const ScalarGraphFn& f) {
  Tape tape(false);
  const Scalar v = f(tape).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

}  // namespace

Scalar grad_check(const ScalarGraphFn& f, std::span<Tensor* const> params, Scalar eps) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw RangeError("grad_check: eps must lie in (0, 1e-3]");

  struct Saved {
    bool requires_grad;
    std::optional<Matrix> grad;
  };
  std::vector<Saved> saved;
  for (Tensor* p : params) {
    saved.push_back({p->requires_grad(), p->has_grad() ? std::optional<Matrix>(p->grad()) : std::nullopt});
    p->set_requires_grad(true);
    p->clear_grad();
  }
  auto restore = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i]->set_requires_grad(saved[i].requires_grad);
      params[i]->clear_grad();
      if (saved[i].grad) params[i]->ensure_grad() = *saved[i].grad;
    }
  };

  Scalar worst = 0.0;
  try {
    {
      Tape tape;
      Var loss = f(tape);
      if (!std::isfinite(loss.item())) throw NumericError("grad_check: function value is not finite");
      tape.backward(loss);
    }
    std::vector<Matrix> analytic;
    for (Tensor* p : params) {
      analytic.push_back(p->has_grad() ? p->grad() : Matrix::Zero(p->value().rows(), p->value().cols()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix& value = params[i]->value();
      for (Index e = 0; e < value.size(); ++e) {
        const Scalar original = value.data()[e];
        value.data()[e] = original + eps;
        const Scalar up = evaluate(f);
        value.data()[e] = original - eps;
        const Scalar down = evaluate(f);
        value.data()[e] = original;
        const Scalar numeric = (up - down) / (2.0 * eps);
        const Scalar err = std::abs(analytic[i].data()[e] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
      }
    }
  } catch (...) {
    restore();
    throw;
  }
  restore();
  return worst;
}

}  // namespace modadapter
