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
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modadapter/autodiff.hpp"
#include "modadapter/encoders.hpp"
#include "modadapter/image.hpp"
#include "modadapter/modk.hpp"

namespace modadapter {

struct DiTConfig {
  Index blocks = 6;
  Index d_model = 64;
  Index heads = 4;
  Index d_mod = 32;
  Index ffn_hidden = 128;
  Index time_dim = 64;
  Index image_size = 16;
  Index patch = 4;
  Index max_prompt = 12;
  int timesteps = 100;
  Scalar beta_start = 1e-3;
  Scalar beta_end = 0.2;
  std::uint64_t seed = 7;

  void validate() const;
  Index image_tokens() const { return (image_size / patch) * (image_size / patch); }
  Index patch_dim() const { return patch * patch * 3; }
  /// Rows per sample: padded text then image tokens.
  Index sequence_length() const { return max_prompt + image_tokens(); }
};

/// Linear beta schedule with alpha and cumulative alpha tables, indexed by
/// t in [0, T).
class NoiseSchedule {
 public:
  NoiseSchedule(int timesteps, Scalar beta_start, Scalar beta_end);
  explicit NoiseSchedule(const DiTConfig& c) : NoiseSchedule(c.timesteps, c.beta_start, c.beta_end) {}

  int timesteps() const { return static_cast<int>(beta_.size()); }
  Scalar beta(int t) const { return beta_.at(static_cast<std::size_t>(t)); }
  Scalar alpha(int t) const { return 1.0 - beta(t); }
  Scalar alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }

 private:
  std::vector<Scalar> beta_;
  std::vector<Scalar> alpha_bar_;
};

/// Row i is the direction injected at block i.
using DirectionSet = Matrix;

/// One concept binding at inference: a prompt token and its directions.
struct ConceptDirections {
  std::size_t token_index = 0;
  DirectionSet directions;
};

/// Per-block base vector y_i plus per-token adjusted vectors y'_i.
class ModulationState {
 public:
  ModulationState() = default;
  /// Every block starts from the same base vector.
  ModulationState(Index blocks, const RowVector& y, std::size_t prompt_length);

  Index blocks() const { return base_.rows(); }
  Index width() const { return base_.cols(); }
  std::size_t prompt_length() const { return prompt_length_; }
  const Matrix& base() const { return base_; }
  const std::map<std::size_t, Matrix>& overrides() const { return overrides_; }

  /// y'_i for an overridden token, y_i otherwise.
  RowVector y(Index block, std::size_t token) const;
  /// One row per token of a `length`-row sequence.
  Matrix token_rows(Index block, Index length) const;

  bool operator==(const ModulationState&) const = default;

 private:
  friend ModulationState apply_concept_directions(ModulationState, std::size_t, const DirectionSet&, Scalar);
  Matrix base_;
  std::size_t prompt_length_ = 0;
  std::map<std::size_t, Matrix> overrides_;
};

/// y = M_t(t_emb) + M(pooled prompt), replicated for every block.
ModulationState base_modulation(const RowVector& time_mapped, const RowVector& prompt_mapped, Index blocks,
                                std::size_t prompt_length);

/// y'_i = y_i + s * delta_i at `token_index`; repeated calls on the same
/// token accumulate.
ModulationState apply_concept_directions(ModulationState state, std::size_t token_index,
                                         const DirectionSet& delta, Scalar s);

/// Sinusoidal features of a diffusion step index in [0, T).
RowVector timestep_embedding(int t, int timesteps, Index dim);

/// Affine AdaLN head: y -> [scale | shift | gate], each `width` wide.
struct AdaLNHead {
  Tensor weight;  // d_mod x 3 width
  Tensor bias;    // 1 x 3 width
};

/// gate(y) * (scale(y) * layer_norm(x) + shift(y)) where row j of `x` uses the
/// modulation vector of token j.
Matrix adaln_modulate(const Matrix& x, const ModulationState& state, const AdaLNHead& head, Index block);
/// Autodiff form taking per-row head outputs `mod` (rows x 3 width).
Var adaln_modulate(Var x, Var mod);

/// Injection used during training: `delta` rows are per-block directions.
struct Injection {
  Index sample = 0;
  Index token = 0;
  Var delta;
  Scalar scale = 1.0;
};

struct DiTBlock {
  AdaLNHead attn_mod;
  AdaLNHead ffn_mod;
  Tensor w_qkv, b_qkv;
  Tensor w_out, b_out;
  Tensor w_ff1, b_ff1;
  Tensor w_ff2, b_ff2;
};

class DiT {
 public:
  explicit DiT(const DiTConfig& config, const ToyEncoders& encoders);
  DiT(const DiT&) = delete;
  DiT& operator=(const DiT&) = delete;

  const DiTConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const ToyEncoders& encoders() const { return *encoders_; }

  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  void set_trainable(bool flag);
  std::uint64_t hash() const;

  /// M_t(t_emb) for a batch of steps, one row each.
  Var time_modulation(Tape& tape, std::span<const int> t);

  /// Batched epsilon prediction. `x_t` holds B * image_tokens patch rows;
  /// returns the same shape.
  Var forward(Tape& tape, std::span<const WordList> prompts, Var x_t, std::span<const int> t,
              std::span<const Injection> injections = {});

  /// One full block on a batch of sequences (exposed for gradient checks).
  Var block_forward(Tape& tape, Index block, Var x, Var y_rows, Index batch,
                    std::span<const std::uint8_t> key_mask);

  /// Single-sample prediction on an image-shaped x_t.
  Image predict_noise(const Image& x_t, int t, const WordList& prompt,
                      std::span<const ConceptDirections> concepts, Scalar s);

  /// Ancestral sampling over `steps` evenly spaced steps of the schedule.
  /// Each sample draws its noise from its own seed.
  std::vector<Image> sample_batch(std::span<const WordList> prompts,
                                  std::span<const std::vector<ConceptDirections>> concepts, Scalar s, int steps,
                                  std::span<const std::uint64_t> seeds);
  Image sample(const WordList& prompt, std::span<const ConceptDirections> concepts, Scalar s, int steps,
               std::uint64_t seed);

  void save(ModkFile& file, const std::string& prefix = "dit/") const;
  void load(const ModkFile& file, const std::string& prefix = "dit/");

  /// Prompt must be non-empty, in vocabulary and at most max_prompt words.
  void check_prompt(const WordList& prompt) const;

 private:
  Var embed(Tape& tape, std::span<const WordList> prompts, Var x_t);

  DiTConfig config_;
  const ToyEncoders* encoders_;
  NoiseSchedule schedule_;
  Matrix image_positions_;

  Tensor w_txt_, b_txt_;
  Tensor w_in_, b_in_;
  Tensor w_t1_, b_t1_, w_t2_, b_t2_;
  std::vector<DiTBlock> blocks_;
  Tensor final_mod_w_, final_mod_b_;  // y -> [scale | shift]
  Tensor w_final_, b_final_;
};

/// Pixels in [0, 1] to the model's [-1, 1] range and back (identity VAE).
Matrix to_latent(const Image& image, Index patch);
Image from_latent(const Matrix& patches, Index size, Index patch);

}  // namespace modadapter
