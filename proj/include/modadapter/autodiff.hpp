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
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "modadapter/tensor.hpp"

namespace modadapter {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid until the
/// tape is cleared or consumed by backward().
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 variable.
  Scalar item() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, which is
/// a topological order, so backward() is a single reverse sweep.
///
/// A tape constructed with `record = false` evaluates values only; no
/// backward closures are kept and backward() is unavailable.
class Tape {
 public:
  /// Receives the node's output value and its gradient, and accumulates into
  /// the inputs' gradients.
  using Backward = std::function<void(Tape&, const Matrix& out, const Matrix& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  /// Registers a persistent tensor. Its gradient is accumulated into
  /// tensor.grad() by backward() when tensor.requires_grad() is set.
  Var leaf(Tensor& tensor);
  /// Appends an operation node. The closure is dropped when no input needs a
  /// gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  /// Gradient buffer of a node, zero-allocated on first access.
  Matrix& grad(Var v);
  bool has_grad(Var v) const { return nodes_[v.id()].has_grad; }

  /// Populates d loss / d p for every leaf tensor p that requires grad, then
  /// frees the graph. Leaves that did not influence the loss receive an exact
  /// zero gradient.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    Tensor* source = nullptr;
    Backward backward;
  };

  bool record_;
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. All operands must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, Scalar factor);
/// Adds a 1xC row to every row of an RxC matrix.
Var add_rowwise(Var a, Var row);
/// Multiplies an arbitrary matrix by a 1x1 variable.
Var scale_by(Var a, Var factor);

Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
/// Column means, producing a 1xC row.
Var mean_rows(Var a);

Var gelu(Var a);
Var silu(Var a);

/// Softmax along `axis` (0 = down columns, 1 = along rows) with
/// max-subtraction.
Var softmax(Var x, int axis = 1);
/// Per-row normalization to zero mean and unit variance (no affine part).
Var layer_norm(Var x, Scalar eps = 1e-6);

Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// out.row(i) = a.row(index[i]).
Var gather_rows(Var a, std::span<const Index> index);
/// out = base; out.row(index[i]) += src.row(i).
Var scatter_add_rows(Var base, Var src, std::span<const Index> index);

/// Batched multi-head scaled dot-product attention.
///
/// `q` holds `batch * query_len` rows, `k` and `v` hold `batch * key_len`
/// rows; sample b attends only within its own segment. Each head uses
/// `cols / heads` columns and scales logits by 1/sqrt(head_dim). Keys whose
/// `key_mask` entry is zero receive zero weight; every query must see at
/// least one unmasked key.
struct AttentionLayout {
  Index heads = 1;
  Index query_len = 0;
  Index key_len = 0;
};
Var attention(Var q, Var k, Var v, const AttentionLayout& layout,
              std::span<const std::uint8_t> key_mask = {});

/// Softmax weights of one head for a single unbatched sample, one row per
/// query.
Matrix attention_weights(const Matrix& q, const Matrix& k, Index heads, Index head,
                         std::span<const std::uint8_t> key_mask = {});

/// x W + b
inline Var linear(Var x, Var weight, Var bias) { return add_rowwise(matmul(x, weight), bias); }

}  // namespace modadapter
