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

#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "modadapter/autodiff.hpp"
#include "modadapter/errors.hpp"
#include "modadapter/gradcheck.hpp"
#include "modadapter/optim.hpp"
#include "modadapter/random.hpp"

using namespace modadapter;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<Scalar>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (auto row : rows) {
    Index c = 0;
    for (Scalar v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Weighted sum so that every output element gets a distinct upstream gradient.
Var weighted(Var x, const Matrix& w) { return sum(mul(x, x.tape().constant(w))); }

}  // namespace

// ---------------------------------------------------------------------------
// matmul

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape t(false);
  Var out = matmul(t.constant(Matrix::Identity(2, 2)), t.constant(mat({{1, 2}, {3, 4}})));
  EXPECT_EQ(out.value(), mat({{1, 2}, {3, 4}}));
}

TEST(Matmul, ScalarProduct) {
  Tape t(false);
  EXPECT_EQ(matmul(t.constant(mat({{2}})), t.constant(mat({{3}}))).item(), 6.0);
}

TEST(Matmul, HandComputedProduct) {
  Tape t(false);
  Var out = matmul(t.constant(mat({{1, 2}, {3, 4}})), t.constant(mat({{5, 6}, {7, 8}})));
  EXPECT_EQ(out.value(), mat({{19, 22}, {43, 50}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape t(false);
  EXPECT_THROW(matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 3))), ShapeError);
}

TEST(Matmul, AssociativityOnRandomChains) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Matrix a = rng.normal_matrix(4, 4), b = rng.normal_matrix(4, 4), c = rng.normal_matrix(4, 4);
    Tape t(false);
    Var left = matmul(matmul(t.constant(a), t.constant(b)), t.constant(c));
    Var right = matmul(t.constant(a), matmul(t.constant(b), t.constant(c)));
    EXPECT_LT((left.value() - right.value()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

// ---------------------------------------------------------------------------
// softmax

TEST(Softmax, SymmetricInputIsUniform) {
  Tape t(false);
  Var y = softmax(t.constant(mat({{0, 0}})));
  EXPECT_DOUBLE_EQ(y.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y.value()(0, 1), 0.5);
}

TEST(Softmax, LogTwoGivesTwoThirds) {
  Tape t(false);
  Var y = softmax(t.constant(mat({{std::numbers::ln2, 0}})));
  EXPECT_NEAR(y.value()(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.value()(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tape t(false);
  Var y = softmax(t.constant(mat({{1000, 0}})));
  EXPECT_TRUE(y.value().allFinite());
  EXPECT_NEAR(y.value()(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(y.value()(0, 1), 0.0, 1e-12);
}

TEST(Softmax, ColumnAxis) {
  Tape t(false);
  Var y = softmax(t.constant(mat({{std::numbers::ln2, 0}, {0, 0}})), 0);
  EXPECT_NEAR(y.value()(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.value()(1, 1), 0.5, 1e-15);
}

TEST(Softmax, EmptyAxisThrows) {
  Tape t(false);
  EXPECT_THROW(softmax(t.constant(Matrix(2, 0))), ShapeError);
  EXPECT_THROW(softmax(t.constant(Matrix(1, 2)), 2), RangeError);
}

TEST(Softmax, RowsSumToOneUpToMagnitudeThousand) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    Matrix x = rng.normal_matrix(50, 17);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = 1e3 * std::tanh(x.data()[i]);
    Tape t(false);
    Var y = softmax(t.constant(x));
    for (Index r = 0; r < y.rows(); ++r) {
      EXPECT_NEAR(y.value().row(r).sum(), 1.0, 1e-12);
      EXPECT_GE(y.value().row(r).minCoeff(), 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// layer_norm

TEST(LayerNorm, ConstantRowMapsToZero) {
  Tape t(false);
  Var y = layer_norm(t.constant(mat({{5, 5, 5}})));
  EXPECT_LT(y.value().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LayerNorm, TwoElementClosedForm) {
  // mean 0, variance 1, so the output is +-1/sqrt(1 + eps).
  Tape t(false);
  Var y = layer_norm(t.constant(mat({{1, -1}})), 1e-6);
  const Scalar expected = 1.0 / std::sqrt(1.0 + 1e-6);
  EXPECT_NEAR(y.value()(0, 0), expected, 1e-15);
  EXPECT_NEAR(y.value()(0, 1), -expected, 1e-15);
}

TEST(LayerNorm, ShiftInvariance) {
  Rng rng(3);
  Matrix x = rng.normal_matrix(6, 9);
  Tape t(false);
  Var a = layer_norm(t.constant(x));
  Var b = layer_norm(t.constant((x.array() + 17.25).matrix()));
  EXPECT_LT((a.value() - b.value()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  Rng rng(4);
  Tape t(false);
  Var y = layer_norm(t.constant(rng.normal_matrix(5, 32, 3.0)), 1e-12);
  for (Index r = 0; r < y.rows(); ++r) {
    EXPECT_NEAR(y.value().row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.value().row(r).squaredNorm() / 32.0, 1.0, 1e-9);
  }
}

// ---------------------------------------------------------------------------
// backward

TEST(Backward, SquareAtThree) {
  Tensor x = Tensor::from_matrix(mat({{3}}), true);
  Tape t;
  Var xv = t.leaf(x);
  t.backward(mul(xv, xv));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
  Rng rng(5);
  Tensor x = Tensor::from_matrix(rng.normal_matrix(1, 6), true);
  Tape t;
  t.backward(sum(softmax(t.leaf(x))));
  EXPECT_LT(x.grad().cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::from_matrix(Matrix::Ones(2, 2), true);
  Tape t;
  EXPECT_THROW(t.backward(t.leaf(x)), ShapeError);
}

TEST(Backward, NonFiniteLossAborts) {
  Tensor x = Tensor::from_matrix(mat({{std::numeric_limits<Scalar>::quiet_NaN()}}), true);
  Tape t;
  Var xv = t.leaf(x);
  EXPECT_THROW(t.backward(mul(xv, xv)), NumericError);
}

TEST(Backward, UnusedParameterGetsExactZero) {
  Rng rng(6);
  Tensor used = Tensor::from_matrix(rng.normal_matrix(3, 3), true);
  Tensor unused = Tensor::from_matrix(rng.normal_matrix(3, 3), true);
  Tape t;
  Var u = t.leaf(used);
  t.leaf(unused);
  t.backward(sum_squares(u));
  ASSERT_TRUE(unused.has_grad());
  EXPECT_TRUE((unused.grad().array() == 0.0).all());
  EXPECT_EQ(t.size(), 0u);  // graph consumed
}

TEST(Backward, MatmulChainMatchesFiniteDifferences) {
  Rng rng(7);
  Tensor a = Tensor::from_matrix(rng.normal_matrix(3, 4), true);
  Tensor b = Tensor::from_matrix(rng.normal_matrix(4, 5), true);
  Tensor c = Tensor::from_matrix(rng.normal_matrix(5, 2), true);
  Matrix w = rng.normal_matrix(3, 2);
  std::vector<Tensor*> params{&a, &b, &c};
  const Scalar err = grad_check(
      [&](Tape& t) { return weighted(matmul(matmul(t.leaf(a), t.leaf(b)), t.leaf(c)), w); }, params);
  EXPECT_LT(err, 1e-8);
}

// ---------------------------------------------------------------------------
// grad_check

TEST(GradCheck, ExactQuadratic) {
  Rng rng(8);
  Tensor x = Tensor::from_matrix(rng.normal_matrix(1, 8), true);
  std::vector<Tensor*> params{&x};
  const Scalar err = grad_check([&](Tape& t) {
    Var v = t.leaf(x);
    return sum(mul(v, v));
  }, params, 1e-5);
  EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, DetectsDoubledGradient) {
  Tensor x = Tensor::from_matrix(mat({{0.9, -1.3, 2.0}}), true);
  std::vector<Tensor*> params{&x};
  // Custom square op whose backward is deliberately twice the true derivative.
  auto faulty_square = [](Var v) {
    Matrix out = v.value().cwiseProduct(v.value());
    return v.tape().record(std::move(out), {v}, [v](Tape& t, const Matrix&, const Matrix& g) {
      t.grad(v) += 2.0 * g.cwiseProduct(2.0 * t.value(v));
    });
  };
  const Scalar err = grad_check([&](Tape& t) { return sum(faulty_square(t.leaf(x))); }, params);
  EXPECT_NEAR(err, 1.0, 1e-6);
}

TEST(GradCheck, RejectsBadStepAndNonFiniteFunction) {
  Tensor x = Tensor::from_matrix(mat({{1.0}}), true);
  std::vector<Tensor*> params{&x};
  auto f = [&](Tape& t) { return sum(t.leaf(x)); };
  EXPECT_THROW(grad_check(f, params, 0.0), RangeError);
  EXPECT_THROW(grad_check(f, params, 1e-2), RangeError);
  auto bad = [&](Tape& t) {
    return scale(sum(t.leaf(x)), std::numeric_limits<Scalar>::infinity());
  };
  EXPECT_THROW(grad_check(bad, params), NumericError);
  EXPECT_TRUE(x.requires_grad());
}

// Every differentiable primitive, three seeds.
class PrimitiveGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PrimitiveGradients, AllBelowTolerance) {
  Rng rng(GetParam());
  Tensor a = Tensor::from_matrix(rng.normal_matrix(4, 6), true);
  Tensor b = Tensor::from_matrix(rng.normal_matrix(4, 6), true);
  Tensor m = Tensor::from_matrix(rng.normal_matrix(6, 3), true);
  Tensor row = Tensor::from_matrix(rng.normal_matrix(1, 6), true);
  Tensor s = Tensor::from_matrix(rng.normal_matrix(1, 1), true);
  const Matrix w46 = rng.normal_matrix(4, 6);
  const Matrix w43 = rng.normal_matrix(4, 3);
  const Matrix w64 = rng.normal_matrix(6, 4);
  const Matrix w16 = rng.normal_matrix(1, 6);

  struct Case {
    const char* name;
    ScalarGraphFn f;
    std::vector<Tensor*> params;
  };
  std::vector<Case> cases = {
      {"matmul", [&](Tape& t) { return weighted(matmul(t.leaf(a), t.leaf(m)), w43); }, {&a, &m}},
      {"transpose", [&](Tape& t) { return weighted(transpose(t.leaf(a)), w64); }, {&a}},
      {"add", [&](Tape& t) { return weighted(add(t.leaf(a), t.leaf(b)), w46); }, {&a, &b}},
      {"sub", [&](Tape& t) { return weighted(sub(t.leaf(a), t.leaf(b)), w46); }, {&a, &b}},
      {"mul", [&](Tape& t) { return weighted(mul(t.leaf(a), t.leaf(b)), w46); }, {&a, &b}},
      {"scale", [&](Tape& t) { return weighted(scale(t.leaf(a), -1.7), w46); }, {&a}},
      {"add_rowwise", [&](Tape& t) { return weighted(add_rowwise(t.leaf(a), t.leaf(row)), w46); }, {&a, &row}},
      {"scale_by", [&](Tape& t) { return weighted(scale_by(t.leaf(a), t.leaf(s)), w46); }, {&a, &s}},
      {"mean", [&](Tape& t) { return mean(mul(t.leaf(a), t.leaf(b))); }, {&a, &b}},
      {"sum_squares", [&](Tape& t) { return sum_squares(t.leaf(a)); }, {&a}},
      {"mean_rows", [&](Tape& t) { return weighted(mean_rows(t.leaf(a)), w16); }, {&a}},
      {"gelu", [&](Tape& t) { return weighted(gelu(t.leaf(a)), w46); }, {&a}},
      {"silu", [&](Tape& t) { return weighted(silu(t.leaf(a)), w46); }, {&a}},
      {"softmax_rows", [&](Tape& t) { return weighted(softmax(t.leaf(a), 1), w46); }, {&a}},
      {"softmax_cols", [&](Tape& t) { return weighted(softmax(t.leaf(a), 0), w46); }, {&a}},
      {"layer_norm", [&](Tape& t) { return weighted(layer_norm(t.leaf(a), 1e-6), w46); }, {&a}},
      {"slice_rows", [&](Tape& t) { return weighted(slice_rows(t.leaf(a), 1, 2), w46.middleRows(0, 2)); }, {&a}},
      {"slice_cols", [&](Tape& t) { return weighted(slice_cols(t.leaf(a), 2, 3), w43); }, {&a}},
      {"concat_rows",
       [&](Tape& t) {
         std::vector<Var> parts{t.leaf(a), t.leaf(row), t.leaf(b)};
         Matrix w(9, 6);
         w << w46, w16, w46;
         return weighted(concat_rows(parts), w);
       },
       {&a, &b, &row}},
      {"concat_cols",
       [&](Tape& t) {
         std::vector<Var> parts{t.leaf(a), t.leaf(b)};
         Matrix w(4, 12);
         w << w46, w46.reverse();
         return weighted(concat_cols(parts), w);
       },
       {&a, &b}},
      {"gather_rows",
       [&](Tape& t) {
         std::vector<Index> idx{3, 0, 3, 1};
         return weighted(gather_rows(t.leaf(a), idx), w46);
       },
       {&a}},
      {"scatter_add_rows",
       [&](Tape& t) {
         std::vector<Index> idx{2, 2, 0, 3};
         return weighted(scatter_add_rows(t.leaf(a), t.leaf(b), idx), w46);
       },
       {&a, &b}},
  };
  for (auto& c : cases) {
    EXPECT_LT(grad_check(c.f, c.params), 1e-6) << c.name;
  }
}

TEST_P(PrimitiveGradients, AttentionBelowTolerance) {
  Rng rng(GetParam() + 100);
  // Two samples, 3 queries and 4 keys each, two heads of width 2.
  Tensor q = Tensor::from_matrix(rng.normal_matrix(6, 4), true);
  Tensor k = Tensor::from_matrix(rng.normal_matrix(8, 4), true);
  Tensor v = Tensor::from_matrix(rng.normal_matrix(8, 6), true);
  const Matrix w = rng.normal_matrix(6, 6);
  std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1, 1, 0};
  std::vector<Tensor*> params{&q, &k, &v};
  const AttentionLayout layout{2, 3, 4};
  EXPECT_LT(grad_check([&](Tape& t) { return weighted(attention(t.leaf(q), t.leaf(k), t.leaf(v), layout), w); },
                       params),
            1e-6);
  EXPECT_LT(grad_check([&](Tape& t) {
              return weighted(attention(t.leaf(q), t.leaf(k), t.leaf(v), layout, mask), w);
            },
                       params),
            1e-6);
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradients, ::testing::Values(11u, 22u, 33u));

// ---------------------------------------------------------------------------
// attention semantics

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng(9);
  Tape t(false);
  Matrix v = rng.normal_matrix(1, 4);
  Var out = attention(t.constant(rng.normal_matrix(3, 4)), t.constant(rng.normal_matrix(1, 4)),
                      t.constant(v), {1, 3, 1});
  for (Index r = 0; r < 3; ++r) EXPECT_LT((out.value().row(r) - v.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Rng rng(10);
  Matrix k = rng.normal_matrix(1, 4).replicate(5, 1);
  Matrix v = rng.normal_matrix(5, 4);
  Tape t(false);
  Var out = attention(t.constant(rng.normal_matrix(2, 4)), t.constant(k), t.constant(v), {1, 2, 5});
  RowVector mean_v = v.colwise().mean();
  for (Index r = 0; r < 2; ++r) EXPECT_LT((out.value().row(r) - mean_v).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Attention, MaskedKeysGetZeroWeight) {
  Rng rng(12);
  Matrix q = rng.normal_matrix(2, 4), k = rng.normal_matrix(3, 4);
  std::vector<std::uint8_t> mask{1, 0, 1};
  Matrix w = attention_weights(q, k, 2, 1, mask);
  EXPECT_EQ(w(0, 1), 0.0);
  EXPECT_NEAR(w.row(1).sum(), 1.0, 1e-12);
  std::vector<std::uint8_t> none{0, 0, 0};
  EXPECT_THROW(attention_weights(q, k, 2, 0, none), ShapeError);
}

TEST(Attention, EmptyKeySetThrows) {
  Tape t(false);
  EXPECT_THROW(attention(t.constant(Matrix::Zero(2, 4)), t.constant(Matrix(0, 4)), t.constant(Matrix(0, 4)),
                         {1, 2, 0}),
               ShapeError);
}

// ---------------------------------------------------------------------------
// AdamW

TEST(AdamW, FirstStepMovesBySignOfGradient) {
  Tensor p = Tensor::from_matrix(mat({{1.0, -2.0, 0.5}}), true);
  p.ensure_grad() = mat({{0.3, -4.0, 1e-3}});
  AdamWConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  std::vector<Tensor*> params{&p};
  OptimState state = make_optim_state(params, cfg);
  adamw_step(params, state);
  EXPECT_NEAR(p.value()(0, 0), 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p.value()(0, 1), -2.0 + 0.01, 1e-8);
  EXPECT_NEAR(p.value()(0, 2), 0.5 - 0.01, 1e-6);
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamW, ZeroGradientWithoutDecayIsNoOp) {
  Tensor p = Tensor::from_matrix(mat({{1.0, -2.0}}), true);
  p.ensure_grad().setZero();
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({&p}, cfg);
  opt.step();
  EXPECT_EQ(p.value(), mat({{1.0, -2.0}}));
}

TEST(AdamW, ZeroGradientWithDecayScalesParameters) {
  Tensor p = Tensor::from_matrix(mat({{1.0, -2.0}}), true);
  p.ensure_grad().setZero();
  AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt({&p}, cfg);
  opt.step();
  EXPECT_DOUBLE_EQ(p.value()(0, 0), 1.0 * (1.0 - 0.05));
  EXPECT_DOUBLE_EQ(p.value()(0, 1), -2.0 * (1.0 - 0.05));
}

TEST(AdamW, ShapeMismatchThrows) {
  Tensor p = Tensor::from_matrix(mat({{1.0, 2.0}}), true);
  std::vector<Tensor*> params{&p};
  OptimState state = make_optim_state(params, {});
  p.ensure_grad() = Matrix::Zero(2, 2);
  EXPECT_THROW(adamw_step(params, state), ShapeError);
  p.ensure_grad() = mat({{std::numeric_limits<Scalar>::infinity(), 0.0}});
  EXPECT_THROW(adamw_step(params, state), NumericError);
  EXPECT_EQ(state.step, 0u);
}

// ---------------------------------------------------------------------------
// Tensor

TEST(TensorType, ShapeAndStorage) {
  Tensor img(Shape{4, 5, 3});
  EXPECT_EQ(img.value().rows(), 20);
  EXPECT_EQ(img.value().cols(), 3);
  EXPECT_EQ(img.size(), 60u);
  EXPECT_FALSE(img.has_grad());
  EXPECT_THROW(Tensor(Shape{2, 2}, Matrix::Zero(1, 3)), ShapeError);
  Tensor scalar(Shape{});
  EXPECT_EQ(scalar.size(), 1u);
}

TEST(TensorType, NonFiniteValuesAreReported) {
  Tensor t = Tensor::from_matrix(mat({{1.0, std::numeric_limits<Scalar>::infinity()}}));
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.check_finite("t"), NumericError);
}
