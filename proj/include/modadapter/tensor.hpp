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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace modadapter {

using Scalar = double;

/// Row-major dense storage shared by every numeric quantity in the project.
template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVectorT = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Matrix = MatrixT<Scalar>;
using RowVector = RowVectorT<Scalar>;
using Vector = VectorT<Scalar>;
using Index = Eigen::Index;

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

/// N-d tensor stored as a row-major matrix whose column count is the last
/// extent and whose row count is the product of the leading extents.
/// Rank 0 and rank 1 tensors are a single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Matrix values, bool requires_grad = false);

  /// Wrap a matrix as a rank-2 tensor.
  static Tensor from_matrix(Matrix values, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return static_cast<std::size_t>(value_.size()); }

  Matrix& value() { return value_; }
  const Matrix& value() const { return value_; }

  std::span<Scalar> data() { return {value_.data(), size()}; }
  std::span<const Scalar> data() const { return {value_.data(), size()}; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  bool has_grad() const { return grad_.has_value(); }
  Matrix& grad();
  const Matrix& grad() const;
  /// Allocates a zero gradient buffer if none is present and returns it.
  Matrix& ensure_grad();
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  bool all_finite() const { return value_.allFinite(); }

  /// Raises NumericError when any stored value is NaN or Inf.
  void check_finite(const std::string& what) const;

 private:
  Shape shape_;
  Matrix value_;
  bool requires_grad_ = false;
  std::optional<Matrix> grad_;
};

/// Rows/cols used to store a tensor of the given shape.
Index storage_rows(const Shape& shape);
Index storage_cols(const Shape& shape);

/// 64-bit FNV-1a over the little-endian bytes of every value.
std::uint64_t content_hash(std::span<const Tensor* const> tensors);

}  // namespace modadapter
