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

#include "modadapter/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "modadapter/errors.hpp"

namespace modadapter {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a) + " vs " + dims(b));
  }
}

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands on different tapes");
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const { return tape_->value(*this); }

Scalar Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on a " + dims(v) + " value");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor& tensor) {
  Node& n = nodes_.emplace_back();
  n.value = tensor.value();
  n.needs_grad = record_ && tensor.requires_grad();
  n.source = &tensor;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) {
      if (&in.tape() != this) throw Error("operand recorded on a different tape");
      needs = needs || nodes_[in.id()].needs_grad;
    }
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw Error("backward() on a tape that does not record");
  if (&loss.tape() != this) throw Error("backward(): loss recorded on a different tape");
  const Matrix& lv = value(loss);
  if (lv.size() != 1) throw ShapeError("backward(): loss must be scalar, got " + dims(lv));
  if (!lv.allFinite()) throw NumericError("backward(): non-finite loss");

  grad(loss).setConstant(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.value, n.grad);
  }
  for (Node& n : nodes_) {
    if (!n.source || !n.needs_grad) continue;
    Matrix& g = n.source->ensure_grad();
    if (n.has_grad) {
      if (!n.grad.allFinite()) throw NumericError("backward(): non-finite gradient");
      g += n.grad;
    }
  }
  nodes_.clear();
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra primitives

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner extents differ " + dims(av) + " * " + dims(bv));
  }
  Matrix out = av * bv;
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a) += g.transpose();
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) t.grad(b) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) t.grad(b) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a) += g.cwiseProduct(t.value(b));
    if (t.needs_grad(b)) t.grad(b) += g.cwiseProduct(t.value(a));
  });
}

Var scale(Var a, Scalar factor) {
  Matrix out = a.value() * factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a) += g * factor;
  });
}

Var add_rowwise(Var a, Var row) {
  require_same_tape(a, row, "add_rowwise");
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_rowwise: row " + dims(rv) + " does not fit " + dims(av));
  }
  Matrix out = av.rowwise() + rv.row(0);
  return a.tape().record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(row)) t.grad(row) += g.colwise().sum();
  });
}

Var scale_by(Var a, Var factor) {
  require_same_tape(a, factor, "scale_by");
  if (factor.value().size() != 1) throw ShapeError("scale_by: factor must be 1x1");
  Matrix out = a.value() * factor.value()(0, 0);
  return a.tape().record(std::move(out), {a, factor}, [a, factor](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(a)) t.grad(a) += g * t.value(factor)(0, 0);
    if (t.needs_grad(factor)) t.grad(factor)(0, 0) += g.cwiseProduct(t.value(a)).sum();
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a).array() += g(0, 0);
  });
}

Var mean(Var a) {
  const auto n = static_cast<Scalar>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty value");
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape().record(std::move(out), {a}, [a, n](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a).array() += g(0, 0) / n;
  });
}

Var sum_squares(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a) += (2.0 * g(0, 0)) * t.value(a);
  });
}

Var mean_rows(Var a) {
  const Index rows = a.value().rows();
  if (rows == 0) throw ShapeError("mean_rows of an empty value");
  Matrix out = a.value().colwise().mean();
  return a.tape().record(std::move(out), {a}, [a, rows](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a).rowwise() += g.row(0) / static_cast<Scalar>(rows);
  });
}

Var gelu(Var a) {
  constexpr Scalar kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr Scalar kA = 0.044715;
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](Scalar v) {
    return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix&, const Matrix& g) {
    Matrix d = t.value(a).unaryExpr([](Scalar v) {
      const Scalar th = std::tanh(kC * (v + kA * v * v * v));
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * v * v);
    });
    t.grad(a) += g.cwiseProduct(d);
  });
}

Var silu(Var a) {
  Matrix out = a.value().unaryExpr([](Scalar v) { return v / (1.0 + std::exp(-v)); });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix&, const Matrix& g) {
    Matrix d = t.value(a).unaryExpr([](Scalar v) {
      const Scalar s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 + v * (1.0 - s));
    });
    t.grad(a) += g.cwiseProduct(d);
  });
}

// ---------------------------------------------------------------------------
// Normalizations

namespace {

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

}  // namespace


Var softmax(Var x, int axis) {
  if (axis != 0 && axis != 1) throw RangeError("softmax: axis must be 0 or 1");
  const Matrix& xv = x.value();
  if ((axis == 1 && xv.cols() == 0) || (axis == 0 && xv.rows() == 0)) {
    throw ShapeError("softmax: empty axis");
  }
  Matrix y = axis == 1 ? softmax_rows(xv) : Matrix(softmax_rows(xv.transpose()).transpose());
  return x.tape().record(std::move(y), {x}, [x, axis](Tape& t, const Matrix& y, const Matrix& g) {
    Matrix gy = g.cwiseProduct(y);
    if (axis == 1) {
      Vector dots = gy.rowwise().sum();
      t.grad(x) += gy - (y.array().colwise() * dots.array()).matrix();
    } else {
      RowVector dots = gy.colwise().sum();
      t.grad(x) += gy - (y.array().rowwise() * dots.array()).matrix();
    }
  });
}

Var layer_norm(Var x, Scalar eps) {
  const Matrix& xv = x.value();
  if (xv.cols() < 1) throw ShapeError("layer_norm: empty last axis");
  const Index n = xv.cols();
  Vector inv_std(xv.rows());
  Matrix y(xv.rows(), n);
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mu = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    y.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  return x.tape().record(std::move(y), {x},
                         [x, inv_std = std::move(inv_std)](Tape& t, const Matrix& y, const Matrix& g) {
                           Matrix& gx = t.grad(x);
                           for (Index r = 0; r < y.rows(); ++r) {
                             const Scalar gm = g.row(r).mean();
                             const Scalar gym = g.row(r).dot(y.row(r)) / static_cast<Scalar>(y.cols());
                             gx.row(r).array() +=
                                 inv_std(r) * (g.row(r).array() - gm - y.row(r).array() * gym);
                           }
                         });
}

// ---------------------------------------------------------------------------
// Structural primitives

Var slice_rows(Var a, Index start, Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) {
    throw ShapeError("slice_rows: range out of bounds for " + dims(av));
  }
  Matrix out = av.middleRows(start, count);
  return a.tape().record(std::move(out), {a}, [a, start, count](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a).middleRows(start, count) += g;
  });
}

Var slice_cols(Var a, Index start, Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw ShapeError("slice_cols: range out of bounds for " + dims(av));
  }
  Matrix out = av.middleCols(start, count);
  return a.tape().record(std::move(out), {a}, [a, start, count](Tape& t, const Matrix&, const Matrix& g) {
    t.grad(a).middleCols(start, count) += g;
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  Index r = 0;
  for (const Var& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(
      std::move(out), parts,
      [inputs, offsets = std::move(offsets)](Tape& t, const Matrix&, const Matrix& g) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (!t.needs_grad(inputs[i])) continue;
          t.grad(inputs[i]) += g.middleRows(offsets[i], t.value(inputs[i]).rows());
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  Index c = 0;
  for (const Var& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(
      std::move(out), parts,
      [inputs, offsets = std::move(offsets)](Tape& t, const Matrix&, const Matrix& g) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (!t.needs_grad(inputs[i])) continue;
          t.grad(inputs[i]) += g.middleCols(offsets[i], t.value(inputs[i]).cols());
        }
      });
}

Var gather_rows(Var a, std::span<const Index> index) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(index.size()), av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = av.row(index[i]);
  }
  std::vector<Index> idx(index.begin(), index.end());
  return a.tape().record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Matrix&, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

Var scatter_add_rows(Var base, Var src, std::span<const Index> index) {
  require_same_tape(base, src, "scatter_add_rows");
  const Matrix& bv = base.value();
  const Matrix& sv = src.value();
  if (sv.rows() != static_cast<Index>(index.size()) || sv.cols() != bv.cols()) {
    throw ShapeError("scatter_add_rows: source " + dims(sv) + " does not fit index/base");
  }
  Matrix out = bv;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= bv.rows()) throw ShapeError("scatter_add_rows: index out of range");
    out.row(index[i]) += sv.row(static_cast<Index>(i));
  }
  std::vector<Index> idx(index.begin(), index.end());
  return base.tape().record(std::move(out), {base, src},
                            [base, src, idx = std::move(idx)](Tape& t, const Matrix&, const Matrix& g) {
                              if (t.needs_grad(base)) t.grad(base) += g;
                              if (t.needs_grad(src)) {
                                Matrix& gs = t.grad(src);
                                for (std::size_t i = 0; i < idx.size(); ++i) {
                                  gs.row(static_cast<Index>(i)) += g.row(idx[i]);
                                }
                              }
                            });
}

// ---------------------------------------------------------------------------
// Attention

namespace {

// Row softmax of scaled logits restricted to unmasked columns.
void masked_softmax_rows(Matrix& s, const std::uint8_t* mask) {
  for (Index r = 0; r < s.rows(); ++r) {
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Index c = 0; c < s.cols(); ++c) {
      if (!mask || mask[c]) m = std::max(m, s(r, c));
    }
    if (!std::isfinite(m)) throw ShapeError("attention: query sees no unmasked key");
    Scalar total = 0;
    for (Index c = 0; c < s.cols(); ++c) {
      const Scalar e = (!mask || mask[c]) ? std::exp(s(r, c) - m) : 0.0;
      s(r, c) = e;
      total += e;
    }
    s.row(r) /= total;
  }
}

}  // namespace

Var attention(Var q, Var k, Var v, const AttentionLayout& layout,
              std::span<const std::uint8_t> key_mask) {
  require_same_tape(q, k, "attention");
  require_same_tape(q, v, "attention");
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  const Index heads = layout.heads;
  const Index lq = layout.query_len;
  const Index lk = layout.key_len;
  if (heads < 1 || lq < 1) throw ShapeError("attention: invalid layout");
  if (lk < 1) throw ShapeError("attention: empty key set");
  if (qv.rows() % lq != 0) throw ShapeError("attention: query rows not a multiple of query_len");
  const Index batch = qv.rows() / lq;
  if (kv.rows() != batch * lk || vv.rows() != batch * lk) {
    throw ShapeError("attention: key/value rows do not match batch * key_len");
  }
  if (kv.cols() != qv.cols() || qv.cols() % heads != 0 || vv.cols() % heads != 0) {
    throw ShapeError("attention: widths incompatible with head count");
  }
  if (!key_mask.empty() && static_cast<Index>(key_mask.size()) != batch * lk) {
    throw ShapeError("attention: key mask length must equal key rows");
  }
  const Index dh = qv.cols() / heads;
  const Index dv = vv.cols() / heads;
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dh));

  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(batch * heads));
  Matrix out(qv.rows(), vv.cols());
  for (Index b = 0; b < batch; ++b) {
    const std::uint8_t* mask = key_mask.empty() ? nullptr : key_mask.data() + b * lk;
    for (Index h = 0; h < heads; ++h) {
      Matrix s = (qv.block(b * lq, h * dh, lq, dh) * kv.block(b * lk, h * dh, lk, dh).transpose()) * inv_sqrt;
      masked_softmax_rows(s, mask);
      out.block(b * lq, h * dv, lq, dv).noalias() = s * vv.block(b * lk, h * dv, lk, dv);
      (*probs)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }

  return q.tape().record(
      std::move(out), {q, k, v},
      [q, k, v, probs, batch, heads, lq, lk, dh, dv, inv_sqrt](Tape& t, const Matrix&, const Matrix& g) {
        const Matrix& qv = t.value(q);
        const Matrix& kv = t.value(k);
        const Matrix& vv = t.value(v);
        const bool gq = t.needs_grad(q);
        const bool gk = t.needs_grad(k);
        const bool gv = t.needs_grad(v);
        for (Index b = 0; b < batch; ++b) {
          for (Index h = 0; h < heads; ++h) {
            const Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
            auto go = g.block(b * lq, h * dv, lq, dv);
            if (gv) t.grad(v).block(b * lk, h * dv, lk, dv).noalias() += p.transpose() * go;
            if (!gq && !gk) continue;
            Matrix dp = go * vv.block(b * lk, h * dv, lk, dv).transpose();
            Vector dots = dp.cwiseProduct(p).rowwise().sum();
            Matrix ds = p.cwiseProduct((dp.colwise() - dots)) * inv_sqrt;
            if (gq) t.grad(q).block(b * lq, h * dh, lq, dh).noalias() += ds * kv.block(b * lk, h * dh, lk, dh);
            if (gk) t.grad(k).block(b * lk, h * dh, lk, dh).noalias() += ds.transpose() * qv.block(b * lq, h * dh, lq, dh);
          }
        }
      });
}

Matrix attention_weights(const Matrix& q, const Matrix& k, Index heads, Index head,
                         std::span<const std::uint8_t> key_mask) {
  if (heads < 1 || head < 0 || head >= heads || q.cols() % heads != 0 || k.cols() != q.cols()) {
    throw ShapeError("attention_weights: invalid head layout");
  }
  if (k.rows() == 0) throw ShapeError("attention_weights: empty key set");
  const Index dh = q.cols() / heads;
  Matrix s = (q.middleCols(head * dh, dh) * k.middleCols(head * dh, dh).transpose()) /
             std::sqrt(static_cast<Scalar>(dh));
  masked_softmax_rows(s, key_mask.empty() ? nullptr : key_mask.data());
  return s;
}

}  // namespace modadapter
