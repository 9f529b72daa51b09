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

#include "modadapter/tensor.hpp"

#include <bit>
#include <sstream>

#include "modadapter/errors.hpp"

namespace modadapter {

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index storage_cols(const Shape& shape) {
  return shape.empty() ? 1 : static_cast<Index>(shape.back());
}

Index storage_rows(const Shape& shape) {
  if (shape.size() <= 1) return 1;
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) n *= shape[i];
  return static_cast<Index>(n);
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : shape_(std::move(shape)),
      value_(Matrix::Zero(storage_rows(shape_), storage_cols(shape_))),
      requires_grad_(requires_grad) {}

Tensor::Tensor(Shape shape, Matrix values, bool requires_grad)
    : shape_(std::move(shape)), value_(std::move(values)), requires_grad_(requires_grad) {
  if (static_cast<std::size_t>(value_.size()) != shape_product(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(value_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
  value_.resize(storage_rows(shape_), storage_cols(shape_));
}

Tensor Tensor::from_matrix(Matrix values, bool requires_grad) {
  Shape shape{static_cast<std::size_t>(values.rows()), static_cast<std::size_t>(values.cols())};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Matrix& Tensor::grad() {
  if (!grad_) throw Error("tensor has no gradient buffer");
  return *grad_;
}

const Matrix& Tensor::grad() const {
  if (!grad_) throw Error("tensor has no gradient buffer");
  return *grad_;
}

Matrix& Tensor::ensure_grad() {
  if (!grad_) grad_ = Matrix::Zero(value_.rows(), value_.cols());
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) grad_->setZero();
}

void Tensor::check_finite(const std::string& what) const {
  if (!value_.allFinite()) throw NumericError("non-finite value in " + what);
  if (grad_ && !grad_->allFinite()) throw NumericError("non-finite gradient in " + what);
}

std::uint64_t content_hash(std::span<const Tensor* const> tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (const Tensor* t : tensors) {
    for (auto e : t->shape()) mix(e);
    for (Scalar v : t->data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

}  // namespace modadapter
