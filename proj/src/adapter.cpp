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

#include "modadapter/adapter.hpp"

#include <cmath>

#include "modadapter/errors.hpp"
#include "modadapter/random.hpp"
#include "modadapter/scene.hpp"
#include "modadapter/sinusoidal.hpp"

namespace modadapter {

namespace {

Tensor normal_param(Index rows, Index cols, Scalar stddev, Rng& rng) {
  return Tensor::from_matrix(rng.normal_matrix(rows, cols, stddev), true);
}

Tensor zero_param(Index rows, Index cols) { return Tensor::from_matrix(Matrix::Zero(rows, cols), true); }

Scalar inv_sqrt(Index n) { return 1.0 / std::sqrt(static_cast<Scalar>(n)); }

ExpertMlp make_mlp(Index d, Index hidden, Scalar out_std, Rng& rng) {
  return ExpertMlp{normal_param(d, hidden, inv_sqrt(d), rng), zero_param(1, hidden),
                   normal_param(hidden, d, out_std, rng), zero_param(1, d)};
}

Var apply_mlp(Tape& tape, ExpertMlp& m, Var x) {
  Var h = gelu(linear(x, tape.leaf(m.w1), tape.leaf(m.b1)));
  return linear(h, tape.leaf(m.w2), tape.leaf(m.b2));
}

}  // namespace

std::string_view variant_name(AdapterVariant v) {
  switch (v) {
    case AdapterVariant::full: return "full";
    case AdapterVariant::no_pretrain: return "no_pretrain";
    case AdapterVariant::no_vl_attn: return "no_vl_attn";
    case AdapterVariant::no_moe: return "no_moe";
    case AdapterVariant::linear_gating: return "linear_gating";
  }
  return "?";
}

AdapterVariant parse_variant(std::string_view name) {
  for (auto v : {AdapterVariant::full, AdapterVariant::no_pretrain, AdapterVariant::no_vl_attn, AdapterVariant::no_moe,
                 AdapterVariant::linear_gating}) {
    if (variant_name(v) == name) return v;
  }
  throw RangeError("unknown ablation variant '" + std::string(name) + "'");
}

void AdapterConfig::validate() const {
  if (blocks < 1) throw RangeError("adapter: blocks must be >= 1");
  if (experts < 1) throw RangeError("adapter: n_experts must be >= 1");
  if (queries < 1) throw RangeError("adapter: query count must be >= 1");
  if (d_mod < 2 || d_mod % 2 != 0) throw RangeError("adapter: d_mod must be even");
  if (expert_hidden < 1 || image_dim < 1) throw RangeError("adapter: widths must be positive");
  if (!(expert_init_std >= 0)) throw RangeError("adapter: expert init std must be >= 0");
}

Index AdapterConfig::dense_hidden() const {
  const Scalar bank = static_cast<Scalar>(experts * (2 * d_mod * expert_hidden + expert_hidden + d_mod));
  return static_cast<Index>(std::lround((bank - static_cast<Scalar>(d_mod)) / static_cast<Scalar>(2 * d_mod + 1)));
}

RowVector sinusoidal_pe(Index pos, Index dim) {
  if (pos < 0) throw RangeError("positional index must be >= 0");
  return sinusoidal_embedding<Scalar>(static_cast<Scalar>(pos), dim);
}

std::vector<std::string> concept_words() {
  std::vector<std::string> words(kShapes.begin(), kShapes.end());
  for (Category c : {Category::texture, Category::tone, Category::light}) words.emplace_back(category_word(c));
  return words;
}

RoutingTable fit_routing(const ToyEncoders& encoders, Index experts, std::uint64_t seed) {
  const auto words = concept_words();
  Matrix feats(static_cast<Index>(words.size()), encoders.mapping().out_dim());
  for (std::size_t i = 0; i < words.size(); ++i) feats.row(static_cast<Index>(i)) = encoders.neutral_feature(words[i]);
  return RoutingTable::fit(words, feats, experts, seed);
}

ModAdapter::ModAdapter(const AdapterConfig& config, const ToyEncoders& encoders, RoutingTable routing)
    : config_(config), encoders_(&encoders), routing_(std::move(routing)) {
  config_.validate();
  const Index d = config_.d_mod;
  if (encoders.mapping().out_dim() != d) throw ShapeError("adapter: d_mod differs from the mapping layer");
  if (encoders.image().dim() != config_.image_dim) throw ShapeError("adapter: image_dim differs from the image encoder");
  if (routing_.experts() != config_.experts) throw ShapeError("adapter: routing table expert count differs");
  pe_.resize(config_.queries, d);
  for (Index i = 0; i < config_.queries; ++i) pe_.row(i) = sinusoidal_pe(i, d);

  Rng rng(derive_seed(config_.seed, 0xada));
  w_q_ = normal_param(d, d, inv_sqrt(d), rng);
  if (config_.variant == AdapterVariant::no_vl_attn) learned_queries_ = normal_param(config_.queries, d, 1.0, rng);
  for (Index j = 0; j < config_.blocks; ++j) {
    Block b;
    b.w_qa = normal_param(d, d, inv_sqrt(d), rng);
    b.w_k = normal_param(config_.image_dim, d, inv_sqrt(config_.image_dim), rng);
    b.w_v = normal_param(config_.image_dim, d, inv_sqrt(config_.image_dim), rng);
    b.w_o = normal_param(d, d, inv_sqrt(d), rng);
    b.b_o = zero_param(1, d);
    if (config_.variant == AdapterVariant::no_moe) {
      b.experts.push_back(make_mlp(d, config_.dense_hidden(), config_.expert_init_std, rng));
    } else {
      for (Index e = 0; e < config_.experts; ++e)
        b.experts.push_back(make_mlp(d, config_.expert_hidden, config_.expert_init_std, rng));
    }
    if (config_.variant == AdapterVariant::linear_gating) {
      b.gate_w = normal_param(d, config_.experts, inv_sqrt(d), rng);
      b.gate_b = zero_param(1, config_.experts);
    }
    blocks_.push_back(std::move(b));
  }
  w_head_ = normal_param(d, d, inv_sqrt(d), rng);
  b_head_ = zero_param(1, d);
}

std::vector<std::pair<std::string, Tensor*>> ModAdapter::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  if (config_.variant == AdapterVariant::no_vl_attn) {
    out.emplace_back("queries", &learned_queries_);
  } else {
    out.emplace_back("w_q", &w_q_);
  }
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const std::string p = "block" + std::to_string(j) + ".";
    Block& b = blocks_[j];
    out.insert(out.end(), {{p + "w_qa", &b.w_qa}, {p + "w_k", &b.w_k}, {p + "w_v", &b.w_v}, {p + "w_o", &b.w_o},
                           {p + "b_o", &b.b_o}});
    for (std::size_t e = 0; e < b.experts.size(); ++e) {
      const std::string q = p + "expert" + std::to_string(e) + ".";
      ExpertMlp& m = b.experts[e];
      out.insert(out.end(), {{q + "w1", &m.w1}, {q + "b1", &m.b1}, {q + "w2", &m.w2}, {q + "b2", &m.b2}});
    }
    if (config_.variant == AdapterVariant::linear_gating) {
      out.insert(out.end(), {{p + "gate_w", &b.gate_w}, {p + "gate_b", &b.gate_b}});
    }
  }
  out.insert(out.end(), {{"w_head", &w_head_}, {"b_head", &b_head_}});
  return out;
}

std::vector<Tensor*> ModAdapter::parameters() {
  std::vector<Tensor*> out;
  for (auto& [n, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> ModAdapter::parameters() const {
  std::vector<const Tensor*> out;
  for (auto& [n, t] : const_cast<ModAdapter*>(this)->named_parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor*> ModAdapter::expert_parameters(Index expert) {
  std::vector<Tensor*> out;
  if (config_.variant == AdapterVariant::no_moe) return out;
  if (expert < 0 || expert >= config_.experts) throw RangeError("expert index out of range");
  for (Block& b : blocks_) {
    ExpertMlp& m = b.experts[static_cast<std::size_t>(expert)];
    out.insert(out.end(), {&m.w1, &m.b1, &m.w2, &m.b2});
  }
  return out;
}

std::size_t ModAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

Index ModAdapter::expert_for(std::string_view word) const {
  auto it = routing_.word_map().find(std::string(word));
  if (it != routing_.word_map().end()) return it->second;
  return route(encoders_->neutral_feature(word), routing_);
}

Var ModAdapter::build_queries(Tape& tape, Var neutral, bool with_pe) {
  const Index batch = neutral.rows();
  const Index n = config_.queries;
  if (neutral.cols() != config_.d_mod) throw ShapeError("build_queries: neutral feature width differs from d_mod");
  std::vector<Index> rows(static_cast<std::size_t>(batch * n));
  for (Index i = 0; i < batch * n; ++i) rows[static_cast<std::size_t>(i)] = i / n;
  Var q = matmul(gather_rows(neutral, rows), tape.leaf(w_q_));
  if (!with_pe) return q;
  return add(q, tape.constant(pe_.replicate(batch, 1)));
}

Var ModAdapter::vl_cross_attention(Tape& tape, Var queries, Var image_feats, Index block, Index batch) {
  Block& b = blocks_.at(static_cast<std::size_t>(block));
  if (image_feats.rows() == 0) throw ShapeError("vl_cross_attention: empty key set");
  const Index n = queries.rows() / batch;
  const Index tokens = image_feats.rows() / batch;
  Var q = matmul(layer_norm(queries), tape.leaf(b.w_qa));
  Var k = matmul(image_feats, tape.leaf(b.w_k));
  Var v = matmul(image_feats, tape.leaf(b.w_v));
  Var a = attention(q, k, v, AttentionLayout{1, n, tokens});
  return add(queries, linear(a, tape.leaf(b.w_o), tape.leaf(b.b_o)));
}

Var ModAdapter::moe_forward(Tape& tape, Var features, Index block, std::span<const Index> expert, bool residual,
                            std::vector<Index>* chosen) {
  Block& b = blocks_.at(static_cast<std::size_t>(block));
  const Index rows = features.rows();
  const Index n = config_.queries;
  const Index batch = rows / n;
  Var h = layer_norm(features);
  Var out;
  if (config_.variant == AdapterVariant::no_moe) {
    out = apply_mlp(tape, b.experts.front(), h);
    if (chosen) chosen->insert(chosen->end(), static_cast<std::size_t>(batch), 0);
  } else {
    std::vector<Index> pick(expert.begin(), expert.end());
    Var weight;
    if (config_.variant == AdapterVariant::linear_gating) {
      Matrix avg = Matrix::Zero(batch, rows);
      for (Index r = 0; r < rows; ++r) avg(r / n, r) = 1.0 / static_cast<Scalar>(n);
      Var logits = linear(matmul(tape.constant(std::move(avg)), h), tape.leaf(b.gate_w), tape.leaf(b.gate_b));
      Var probs = softmax(logits, 1);
      pick.assign(static_cast<std::size_t>(batch), 0);
      Matrix onehot = Matrix::Zero(batch, config_.experts);
      for (Index i = 0; i < batch; ++i) {
        Index best = 0;
        for (Index e = 1; e < config_.experts; ++e) {
          if (probs.value()(i, e) > probs.value()(i, best)) best = e;
        }
        pick[static_cast<std::size_t>(i)] = best;
        onehot(i, best) = 1.0;
      }
      Var top = matmul(mul(probs, tape.constant(std::move(onehot))), tape.constant(Matrix::Ones(config_.experts, 1)));
      std::vector<Index> row_concept(static_cast<std::size_t>(rows));
      for (Index r = 0; r < rows; ++r) row_concept[static_cast<std::size_t>(r)] = r / n;
      weight = matmul(gather_rows(top, row_concept), tape.constant(Matrix::Ones(1, config_.d_mod)));
    }
    if (static_cast<Index>(pick.size()) != batch) throw ShapeError("moe_forward: one expert index per concept");
    out = tape.constant(Matrix::Zero(rows, config_.d_mod));
    for (Index e = 0; e < config_.experts; ++e) {
      std::vector<Index> idx;
      for (Index i = 0; i < batch; ++i) {
        const Index p = pick[static_cast<std::size_t>(i)];
        if (p < 0 || p >= config_.experts) throw RangeError("expert index out of range");
        if (p != e) continue;
        for (Index r = 0; r < n; ++r) idx.push_back(i * n + r);
      }
      if (idx.empty()) continue;
      out = scatter_add_rows(out, apply_mlp(tape, b.experts[static_cast<std::size_t>(e)], gather_rows(h, idx)), idx);
    }
    if (weight.valid()) out = mul(out, weight);
    if (chosen) chosen->insert(chosen->end(), pick.begin(), pick.end());
  }
  return residual ? add(features, out) : out;
}

AdapterOutput ModAdapter::forward(Tape& tape, std::span<const ConceptInput> concepts) {
  const auto batch = static_cast<Index>(concepts.size());
  if (batch < 1) throw ShapeError("adapter: no concepts");
  const Index n = config_.queries;
  const Index d = config_.d_mod;
  const Index tokens = concepts.front().image_features.rows();
  Matrix neutral(batch, d);
  Matrix feats(batch * tokens, config_.image_dim);
  std::vector<Index> experts(static_cast<std::size_t>(batch));
  for (Index i = 0; i < batch; ++i) {
    const ConceptInput& c = concepts[static_cast<std::size_t>(i)];
    if (c.image_features.rows() != tokens || c.image_features.cols() != config_.image_dim || tokens == 0)
      throw ShapeError("adapter: image features have the wrong shape");
    neutral.row(i) = encoders_->neutral_feature(c.word);
    feats.middleRows(i * tokens, tokens) = c.image_features;
    experts[static_cast<std::size_t>(i)] = expert_for(c.word);
  }
  Var neutral_v = tape.constant(std::move(neutral));
  Var feats_v = tape.constant(std::move(feats));

  Var q;
  if (config_.variant == AdapterVariant::no_vl_attn) {
    std::vector<Index> rows(static_cast<std::size_t>(batch * n));
    for (Index i = 0; i < batch * n; ++i) rows[static_cast<std::size_t>(i)] = i % n;
    q = gather_rows(tape.leaf(learned_queries_), rows);
  } else {
    q = build_queries(tape, neutral_v);
  }
  AdapterOutput out;
  for (Index j = 0; j < config_.blocks; ++j) {
    q = vl_cross_attention(tape, q, feats_v, j, batch);
    q = moe_forward(tape, q, j, experts, true, &out.experts);
  }
  out.features = linear(q, tape.leaf(w_head_), tape.leaf(b_head_));
  std::vector<Index> rows(static_cast<std::size_t>(batch * n));
  for (Index i = 0; i < batch * n; ++i) rows[static_cast<std::size_t>(i)] = i / n;
  out.directions = sub(out.features, gather_rows(neutral_v, rows));
  return out;
}

ConceptInput ModAdapter::concept_input(const Image& image, std::string_view word) const {
  return ConceptInput{encoders_->image().encode_image_patches(image), std::string(word)};
}

Matrix ModAdapter::predict_directions(const Image& concept_image, std::string_view concept_word) {
  Tape tape(false);
  const ConceptInput in[1] = {concept_input(concept_image, concept_word)};
  return forward(tape, in).directions.value();
}

Matrix ModAdapter::predict_features(const Image& concept_image, std::string_view concept_word) {
  Tape tape(false);
  const ConceptInput in[1] = {concept_input(concept_image, concept_word)};
  return forward(tape, in).features.value();
}

std::uint64_t ModAdapter::hash() const { return content_hash(parameters()); }

void ModAdapter::save(ModkFile& file, const std::string& prefix) const {
  const std::int64_t cfg[7] = {config_.blocks, config_.experts, config_.queries, config_.d_mod,
                               config_.expert_hidden, config_.image_dim, static_cast<std::int64_t>(config_.variant)};
  file.add_i64(prefix + "config", {7}, cfg);
  for (auto& [name, t] : const_cast<ModAdapter*>(this)->named_parameters()) file.add_f64(prefix + name, *t);
  routing_.save(file, prefix + "routing/");
}

void ModAdapter::load(const ModkFile& file, const std::string& prefix) {
  const auto cfg = file.get_i64(prefix + "config");
  const std::int64_t mine[7] = {config_.blocks, config_.experts, config_.queries, config_.d_mod,
                                config_.expert_hidden, config_.image_dim, static_cast<std::int64_t>(config_.variant)};
  if (cfg.size() != 7 || !std::equal(cfg.begin(), cfg.end(), mine))
    throw FormatError("checkpoint was written for a different adapter configuration");
  for (auto& [name, t] : named_parameters()) {
    Tensor loaded = file.get_f64(prefix + name);
    if (loaded.shape() != t->shape()) throw FormatError("checkpoint tensor " + name + " has the wrong shape");
    t->value() = loaded.value();
    t->clear_grad();
  }
  routing_ = RoutingTable::load(file, prefix + "routing/");
}

}  // namespace modadapter
