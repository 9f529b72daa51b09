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

#include "modadapter/verify.hpp"

#include <functional>

#include "modadapter/adapter.hpp"
#include "modadapter/dataset.hpp"
#include "modadapter/dit.hpp"
#include "modadapter/gradcheck.hpp"
#include "modadapter/random.hpp"
#include "modadapter/training.hpp"

namespace modadapter {

namespace {

Var weighted(Var x, const Matrix& w) { return sum(mul(x, x.tape().constant(w))); }

struct Case {
  std::string name;
  ScalarGraphFn f;
  std::vector<Tensor*> params;
};

void primitives(std::uint64_t seed, std::vector<GradCheckResult>& out) {
  Rng rng(seed);
  Tensor a = Tensor::from_matrix(rng.normal_matrix(4, 6), true);
  Tensor b = Tensor::from_matrix(rng.normal_matrix(4, 6), true);
  Tensor m = Tensor::from_matrix(rng.normal_matrix(6, 3), true);
  Tensor row = Tensor::from_matrix(rng.normal_matrix(1, 6), true);
  Tensor s = Tensor::from_matrix(rng.normal_matrix(1, 1), true);
  Tensor q = Tensor::from_matrix(rng.normal_matrix(6, 4), true);
  Tensor k = Tensor::from_matrix(rng.normal_matrix(8, 4), true);
  Tensor v = Tensor::from_matrix(rng.normal_matrix(8, 6), true);
  const Matrix w46 = rng.normal_matrix(4, 6);
  const Matrix w43 = rng.normal_matrix(4, 3);
  const Matrix w64 = rng.normal_matrix(6, 4);
  const Matrix w16 = rng.normal_matrix(1, 6);
  const Matrix w66 = rng.normal_matrix(6, 6);
  const std::vector<Index> gather{3, 0, 3, 1};
  const std::vector<Index> scatter{2, 2, 0, 3};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1, 1, 0};
  const AttentionLayout layout{2, 3, 4};

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
      {"softmax", [&](Tape& t) { return weighted(softmax(t.leaf(a), 1), w46); }, {&a}},
      {"layer_norm", [&](Tape& t) { return weighted(layer_norm(t.leaf(a)), w46); }, {&a}},
      {"slice_rows", [&](Tape& t) { return weighted(slice_rows(t.leaf(a), 1, 2), w46.topRows(2)); }, {&a}},
      {"slice_cols", [&](Tape& t) { return weighted(slice_cols(t.leaf(a), 2, 3), w43); }, {&a}},
      {"concat_rows",
       [&](Tape& t) {
         const Var parts[2] = {t.leaf(a), t.leaf(row)};
         return weighted(concat_rows(parts), (Matrix(5, 6) << w46, w16).finished());
       },
       {&a, &row}},
      {"concat_cols",
       [&](Tape& t) {
         const Var parts[2] = {t.leaf(a), t.leaf(b)};
         return weighted(concat_cols(parts), (Matrix(4, 12) << w46, w46.reverse()).finished());
       },
       {&a, &b}},
      {"gather_rows", [&](Tape& t) { return weighted(gather_rows(t.leaf(a), gather), w46); }, {&a}},
      {"scatter_add_rows",
       [&](Tape& t) { return weighted(scatter_add_rows(t.leaf(a), t.leaf(b), scatter), w46); },
       {&a, &b}},
      {"attention",
       [&](Tape& t) { return weighted(attention(t.leaf(q), t.leaf(k), t.leaf(v), layout, mask), w66); },
       {&q, &k, &v}},
  };
  for (Case& c : cases) out.push_back({c.name, seed, grad_check(c.f, c.params), kPrimitiveTolerance});
}

EncoderConfig mini_encoders() {
  EncoderConfig e;
  e.text_dim = 8;
  e.mod_dim = 4;
  return e;
}

void adapter_objective(std::uint64_t seed, std::vector<GradCheckResult>& out) {
  ToyEncoders enc(Vocabulary::builtin(), mini_encoders());
  AdapterConfig cfg;
  cfg.blocks = 2;
  cfg.experts = 2;
  cfg.queries = 3;
  cfg.d_mod = 4;
  cfg.expert_hidden = 5;
  cfg.expert_init_std = 0.5;
  cfg.seed = seed;
  ModAdapter adapter(cfg, enc, fit_routing(enc, cfg.experts, seed));
  const Dataset data = generate_dataset(3, seed, Split::train);
  std::vector<PretrainExample> batch;
  for (std::size_t i = 0; i < 3; ++i) batch.push_back(pretrain_example(data.samples[i], kCategories[i + 1]));
  out.push_back({"adapter_pretrain_loss", seed,
                 grad_check([&](Tape& t) { return pretrain_loss(t, adapter, enc, batch); }, adapter.parameters()),
                 kEndToEndTolerance});
}

void backbone_objective(std::uint64_t seed, std::vector<GradCheckResult>& out) {
  ToyEncoders enc(Vocabulary::builtin(), mini_encoders());
  DiTConfig cfg;
  cfg.blocks = 1;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.d_mod = 4;
  cfg.ffn_hidden = 8;
  cfg.time_dim = 4;
  cfg.seed = seed;
  DiT dit(cfg, enc);
  Rng rng(derive_seed(seed, 5));
  // move off the zero-initialized output layer so every path carries gradient
  for (Tensor* p : dit.parameters()) p->value() += rng.normal_matrix(p->value().rows(), p->value().cols(), 0.1);
  const Dataset data = generate_dataset(2, seed, Split::train);
  std::vector<WordList> prompts;
  Matrix x0(2 * cfg.image_tokens(), cfg.patch_dim());
  for (std::size_t i = 0; i < 2; ++i) {
    prompts.push_back(data.samples[i].caption.words);
    x0.middleRows(static_cast<Index>(i) * cfg.image_tokens(), cfg.image_tokens()) =
        to_latent(data.samples[i].image, cfg.patch);
  }
  const std::vector<int> ts{static_cast<int>(rng.below(100)), static_cast<int>(rng.below(100))};
  const Matrix eps = rng.normal_matrix(x0.rows(), x0.cols());
  const Matrix xt = noised_latents(dit.schedule(), x0, ts, eps, cfg.image_tokens());
  Tensor delta = Tensor::from_matrix(rng.normal_matrix(cfg.blocks, cfg.d_mod), true);
  std::vector<Tensor*> params = dit.parameters();
  params.push_back(&delta);
  const auto token = static_cast<Index>(data.samples[1].caption.concept_for(Category::tone).token_index);
  out.push_back({"backbone_diffusion_loss", seed,
                 grad_check(
                     [&](Tape& t) {
                       const Injection inj[1] = {Injection{1, token, t.leaf(delta), 1.0}};
                       return epsilon_mse(dit.forward(t, prompts, t.constant(xt), ts, inj), eps);
                     },
                     params),
                 kEndToEndTolerance});
}

}  // namespace

std::vector<GradCheckResult> gradient_suite(std::span<const std::uint64_t> seeds) {
  std::vector<GradCheckResult> out;
  for (std::uint64_t seed : seeds) {
    primitives(seed, out);
    adapter_objective(seed, out);
    backbone_objective(seed, out);
  }
  return out;
}

}  // namespace modadapter
