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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modadapter/autodiff.hpp"
#include "modadapter/encoders.hpp"
#include "modadapter/kmeans.hpp"
#include "modadapter/modk.hpp"

namespace modadapter {

enum class AdapterVariant {
  full,
  no_pretrain,    // same network; the caller skips the pretraining stage
  no_vl_attn,     // learnable queries instead of word-derived ones
  no_moe,         // one wide MLP instead of routed experts
  linear_gating,  // learnable softmax gate with top-1 selection
};

std::string_view variant_name(AdapterVariant v);
/// Throws RangeError for unknown names.
AdapterVariant parse_variant(std::string_view name);

struct AdapterConfig {
  Index blocks = 2;        // N'
  Index experts = 4;
  Index queries = 6;       // N, the backbone block count
  Index d_mod = 32;
  Index expert_hidden = 64;
  Index image_dim = 48;
  Scalar expert_init_std = 0.02;
  AdapterVariant variant = AdapterVariant::full;
  std::uint64_t seed = 11;

  void validate() const;
  /// Hidden width of the single MLP in the no_moe variant, chosen so the
  /// parameter count matches the expert bank.
  Index dense_hidden() const;
};

/// Interleaved sin/cos of `pos`, base 10000.
RowVector sinusoidal_pe(Index pos, Index dim);

struct ExpertMlp {
  Tensor w1, b1, w2, b2;
};

/// One concept to encode: its image patch features and concept word.
struct ConceptInput {
  Matrix image_features;  // tokens x image_dim
  std::string word;
};

struct AdapterOutput {
  Var features;    // F+, B * N rows
  Var directions;  // F+ - neutral, B * N rows
  std::vector<Index> experts;  // chosen expert per concept and adapter block
};

class ModAdapter {
 public:
  ModAdapter(const AdapterConfig& config, const ToyEncoders& encoders, RoutingTable routing);
  ModAdapter(const ModAdapter&) = delete;
  ModAdapter& operator=(const ModAdapter&) = delete;

  const AdapterConfig& config() const { return config_; }
  const RoutingTable& routing() const { return routing_; }

  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  /// Parameters of one expert (empty for the no_moe variant).
  std::vector<Tensor*> expert_parameters(Index expert);
  std::size_t parameter_count() const;

  /// Q_i = W_q neutral + pe(i), one row per query.
  Var build_queries(Tape& tape, Var neutral, bool with_pe = true);
  /// Pre-norm residual cross-attention of queries (batch * N rows) over
  /// image features (batch * tokens rows).
  Var vl_cross_attention(Tape& tape, Var queries, Var image_feats, Index block, Index batch);
  /// Pre-norm residual expert MLP; `expert` holds one index per concept.
  /// Under linear_gating the gate picks the expert instead and `expert` is
  /// ignored. The indices actually used are appended to `chosen`.
  Var moe_forward(Tape& tape, Var features, Index block, std::span<const Index> expert, bool residual = true,
                  std::vector<Index>* chosen = nullptr);

  /// Batched forward for concepts. Routing is looked up per concept word.
  AdapterOutput forward(Tape& tape, std::span<const ConceptInput> concepts);

  /// Directions for one concept image and word (blocks x d_mod rows).
  Matrix predict_directions(const Image& concept_image, std::string_view concept_word);
  /// F+ rows for one concept.
  Matrix predict_features(const Image& concept_image, std::string_view concept_word);

  /// Patch features of a concept image paired with its word.
  ConceptInput concept_input(const Image& image, std::string_view word) const;

  /// Expert chosen for a concept word by the k-means table.
  Index expert_for(std::string_view word) const;

  std::uint64_t hash() const;
  void save(ModkFile& file, const std::string& prefix = "adapter/") const;
  void load(const ModkFile& file, const std::string& prefix = "adapter/");

 private:
  AdapterConfig config_;
  const ToyEncoders* encoders_;
  RoutingTable routing_;
  Matrix pe_;

  Tensor w_q_;
  Tensor learned_queries_;  // no_vl_attn
  struct Block {
    Tensor w_qa, w_k, w_v, w_o, b_o;
    std::vector<ExpertMlp> experts;  // one entry in the no_moe variant
    Tensor gate_w, gate_b;           // linear_gating
  };
  std::vector<Block> blocks_;
  Tensor w_head_, b_head_;
};

/// Concept words the routing table is fitted on (shape words and category
/// words).
std::vector<std::string> concept_words();
RoutingTable fit_routing(const ToyEncoders& encoders, Index experts, std::uint64_t seed);

}  // namespace modadapter
