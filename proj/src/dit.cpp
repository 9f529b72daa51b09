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

#include "modadapter/dit.hpp"

#include <algorithm>
#include <cmath>

#include "modadapter/errors.hpp"
#include "modadapter/random.hpp"
#include "modadapter/sinusoidal.hpp"

namespace modadapter {

namespace {

Tensor normal_param(Index rows, Index cols, Scalar stddev, Rng& rng) {
  return Tensor::from_matrix(rng.normal_matrix(rows, cols, stddev), true);
}

Tensor zero_param(Index rows, Index cols) { return Tensor::from_matrix(Matrix::Zero(rows, cols), true); }

Var linear_leaf(Tape& tape, Var x, Tensor& w, Tensor& b) { return linear(x, tape.leaf(w), tape.leaf(b)); }

}  // namespace

void DiTConfig::validate() const {
  if (blocks < 1) throw RangeError("DiT: blocks must be >= 1");
  if (d_model < 1 || heads < 1 || d_model % heads != 0) throw RangeError("DiT: d_model must be divisible by heads");
  if (d_mod < 1 || ffn_hidden < 1) throw RangeError("DiT: widths must be positive");
  if (time_dim < 2 || time_dim % 2 != 0) throw RangeError("DiT: time_dim must be even");
  if (d_model % 4 != 0) throw RangeError("DiT: d_model must be a multiple of 4 for 2-D positions");
  if (patch < 1 || image_size % patch != 0) throw RangeError("DiT: image size must be divisible by patch");
  if (max_prompt < 1) throw RangeError("DiT: max_prompt must be >= 1");
  if (timesteps < 2) throw RangeError("DiT: T must be >= 2");
  if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1)) throw RangeError("DiT: need 0 < beta_1 <= beta_T < 1");
}

NoiseSchedule::NoiseSchedule(int timesteps, Scalar beta_start, Scalar beta_end) {
  if (timesteps < 2) throw RangeError("schedule: T must be >= 2");
  if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1)) throw RangeError("schedule: need 0 < beta_1 <= beta_T < 1");
  Scalar acc = 1;
  for (int t = 0; t < timesteps; ++t) {
    const Scalar b = beta_start + (beta_end - beta_start) * static_cast<Scalar>(t) / static_cast<Scalar>(timesteps - 1);
    beta_.push_back(b);
    acc *= 1.0 - b;
    alpha_bar_.push_back(acc);
  }
}

// ---------------------------------------------------------------------------
// Modulation state

ModulationState::ModulationState(Index blocks, const RowVector& y, std::size_t prompt_length)
    : base_(y.replicate(blocks, 1)), prompt_length_(prompt_length) {
  if (blocks < 1) throw RangeError("modulation: blocks must be >= 1");
}

RowVector ModulationState::y(Index block, std::size_t token) const {
  if (block < 0 || block >= blocks()) throw RangeError("modulation: block out of range");
  auto it = overrides_.find(token);
  if (it != overrides_.end()) return it->second.row(block);
  return base_.row(block);
}

Matrix ModulationState::token_rows(Index block, Index length) const {
  Matrix out(length, width());
  for (Index j = 0; j < length; ++j) out.row(j) = y(block, static_cast<std::size_t>(j));
  return out;
}

ModulationState base_modulation(const RowVector& time_mapped, const RowVector& prompt_mapped, Index blocks,
                                std::size_t prompt_length) {
  if (time_mapped.size() != prompt_mapped.size()) throw ShapeError("base_modulation: width mismatch");
  return ModulationState(blocks, time_mapped + prompt_mapped, prompt_length);
}

ModulationState apply_concept_directions(ModulationState state, std::size_t token_index, const DirectionSet& delta,
                                         Scalar s) {
  if (token_index >= state.prompt_length_) throw RangeError("concept token index outside the prompt");
  if (delta.rows() != state.blocks() || delta.cols() != state.width())
    throw ShapeError("concept directions must have one row per block");
  auto [it, fresh] = state.overrides_.try_emplace(token_index, state.base_);
  it->second += s * delta;
  return state;
}

RowVector timestep_embedding(int t, int timesteps, Index dim) {
  if (t < 0 || t >= timesteps) throw RangeError("timestep " + std::to_string(t) + " out of range");
  return sinusoidal_embedding<Scalar>(static_cast<Scalar>(t), dim);
}

Var adaln_modulate(Var x, Var mod) {
  const Index d = x.cols();
  if (mod.cols() != 3 * d || mod.rows() != x.rows()) throw ShapeError("adaln: modulation rows do not fit tokens");
  Var scale_v = slice_cols(mod, 0, d);
  Var shift_v = slice_cols(mod, d, d);
  Var gate_v = slice_cols(mod, 2 * d, d);
  return mul(gate_v, add(mul(scale_v, layer_norm(x)), shift_v));
}

Matrix adaln_modulate(const Matrix& x, const ModulationState& state, const AdaLNHead& head, Index block) {
  Tape tape(false);
  Matrix mod = state.token_rows(block, x.rows()) * head.weight.value();
  mod.rowwise() += head.bias.value().row(0);
  return adaln_modulate(tape.constant(x), tape.constant(std::move(mod))).value();
}

// ---------------------------------------------------------------------------
// Model

Matrix to_latent(const Image& image, Index patch) { return patchify(image, patch).array() * 2.0 - 1.0; }

Image from_latent(const Matrix& patches, Index size, Index patch) {
  Image img = unpatchify(patches, size, size, patch);
  img.rgb = ((img.rgb.array() + 1.0) * 0.5).cwiseMax(0.0).cwiseMin(1.0);
  return img;
}

DiT::DiT(const DiTConfig& config, const ToyEncoders& encoders)
    : config_(config), encoders_(&encoders), schedule_((config.validate(), config)) {
  const Index d = config_.d_model;
  const Index side = config_.image_size / config_.patch;
  image_positions_.resize(config_.image_tokens(), d);
  for (Index r = 0; r < side; ++r) {
    for (Index c = 0; c < side; ++c) {
      image_positions_.row(r * side + c) << sinusoidal_embedding<Scalar>(static_cast<Scalar>(r), d / 2),
          sinusoidal_embedding<Scalar>(static_cast<Scalar>(c), d / 2);
    }
  }
  if (encoders.mapping().out_dim() != config_.d_mod) throw ShapeError("DiT: d_mod differs from the mapping layer");

  Rng rng(derive_seed(config_.seed, 0xd17));
  const Index dt = encoders.text().dim();
  const Index pd = config_.patch_dim();
  const auto inv = [](Index n) { return 1.0 / std::sqrt(static_cast<Scalar>(n)); };
  w_txt_ = normal_param(dt, d, 1.0, rng);
  b_txt_ = zero_param(1, d);
  w_in_ = normal_param(pd, d, inv(pd), rng);
  b_in_ = zero_param(1, d);
  w_t1_ = normal_param(config_.time_dim, d, inv(config_.time_dim), rng);
  b_t1_ = zero_param(1, d);
  w_t2_ = normal_param(d, config_.d_mod, inv(d), rng);
  b_t2_ = zero_param(1, config_.d_mod);

  auto make_head = [&](Index width, int parts) {
    AdaLNHead h;
    h.weight = normal_param(config_.d_mod, parts * width, 0.5 * inv(config_.d_mod), rng);
    Matrix b = Matrix::Zero(1, parts * width);
    b.leftCols(width).setOnes();                      // scale
    if (parts == 3) b.rightCols(width).setOnes();     // gate
    h.bias = Tensor::from_matrix(b, true);
    return h;
  };
  const Scalar out_scale = 0.5;
  for (Index i = 0; i < config_.blocks; ++i) {
    DiTBlock blk;
    blk.attn_mod = make_head(d, 3);
    blk.ffn_mod = make_head(d, 3);
    blk.w_qkv = normal_param(d, 3 * d, inv(d), rng);
    blk.b_qkv = zero_param(1, 3 * d);
    blk.w_out = normal_param(d, d, out_scale * inv(d), rng);
    blk.b_out = zero_param(1, d);
    blk.w_ff1 = normal_param(d, config_.ffn_hidden, inv(d), rng);
    blk.b_ff1 = zero_param(1, config_.ffn_hidden);
    blk.w_ff2 = normal_param(config_.ffn_hidden, d, out_scale * inv(config_.ffn_hidden), rng);
    blk.b_ff2 = zero_param(1, d);
    blocks_.push_back(std::move(blk));
  }
  AdaLNHead fin = make_head(d, 2);
  final_mod_w_ = std::move(fin.weight);
  final_mod_b_ = std::move(fin.bias);
  w_final_ = zero_param(d, pd);
  b_final_ = zero_param(1, pd);
}

std::vector<std::pair<std::string, Tensor*>> DiT::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out{
      {"w_txt", &w_txt_}, {"b_txt", &b_txt_}, {"w_in", &w_in_}, {"b_in", &b_in_},
      {"w_t1", &w_t1_},   {"b_t1", &b_t1_},   {"w_t2", &w_t2_}, {"b_t2", &b_t2_},
  };
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    DiTBlock& b = blocks_[i];
    out.insert(out.end(), {{p + "attn_mod.w", &b.attn_mod.weight},
                           {p + "attn_mod.b", &b.attn_mod.bias},
                           {p + "ffn_mod.w", &b.ffn_mod.weight},
                           {p + "ffn_mod.b", &b.ffn_mod.bias},
                           {p + "w_qkv", &b.w_qkv},
                           {p + "b_qkv", &b.b_qkv},
                           {p + "w_out", &b.w_out},
                           {p + "b_out", &b.b_out},
                           {p + "w_ff1", &b.w_ff1},
                           {p + "b_ff1", &b.b_ff1},
                           {p + "w_ff2", &b.w_ff2},
                           {p + "b_ff2", &b.b_ff2}});
  }
  out.insert(out.end(), {{"final_mod.w", &final_mod_w_},
                         {"final_mod.b", &final_mod_b_},
                         {"w_final", &w_final_},
                         {"b_final", &b_final_}});
  return out;
}

std::vector<Tensor*> DiT::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> DiT::parameters() const {
  std::vector<const Tensor*> out;
  for (auto& [name, t] : const_cast<DiT*>(this)->named_parameters()) out.push_back(t);
  return out;
}

void DiT::set_trainable(bool flag) {
  for (Tensor* t : parameters()) {
    t->set_requires_grad(flag);
    if (!flag) t->clear_grad();
  }
}

std::uint64_t DiT::hash() const {
  const auto params = parameters();
  return content_hash(params);
}

void DiT::check_prompt(const WordList& prompt) const {
  if (prompt.empty()) throw RangeError("prompt is empty");
  if (static_cast<Index>(prompt.size()) > config_.max_prompt)
    throw RangeError("prompt longer than " + std::to_string(config_.max_prompt) + " words");
  for (const auto& w : prompt) encoders_->vocab().index(w);
}

Var DiT::time_modulation(Tape& tape, std::span<const int> t) {
  Matrix temb(static_cast<Index>(t.size()), config_.time_dim);
  for (std::size_t b = 0; b < t.size(); ++b)
    temb.row(static_cast<Index>(b)) = timestep_embedding(t[b], config_.timesteps, config_.time_dim);
  Var h = silu(linear_leaf(tape, tape.constant(std::move(temb)), w_t1_, b_t1_));
  return linear_leaf(tape, h, w_t2_, b_t2_);
}

Var DiT::embed(Tape& tape, std::span<const WordList> prompts, Var x_t) {
  const auto batch = static_cast<Index>(prompts.size());
  const Index p = config_.max_prompt;
  const Index n_img = config_.image_tokens();
  const Index len = config_.sequence_length();
  Matrix text = Matrix::Zero(batch * p, encoders_->text().dim());
  for (Index b = 0; b < batch; ++b) {
    const WordList& prompt = prompts[static_cast<std::size_t>(b)];
    check_prompt(prompt);
    text.middleRows(b * p, static_cast<Index>(prompt.size())) = encoders_->text().encode_tokens(prompt);
  }
  Var txt = linear_leaf(tape, tape.constant(std::move(text)), w_txt_, b_txt_);
  Var img = add(linear_leaf(tape, x_t, w_in_, b_in_), tape.constant(image_positions_.replicate(batch, 1)));
  const Var parts[2] = {txt, img};
  Var stacked = concat_rows(parts);
  std::vector<Index> order(static_cast<std::size_t>(batch * len));
  for (Index b = 0; b < batch; ++b) {
    for (Index j = 0; j < len; ++j) {
      order[static_cast<std::size_t>(b * len + j)] = j < p ? b * p + j : batch * p + b * n_img + (j - p);
    }
  }
  return gather_rows(stacked, order);
}

Var DiT::block_forward(Tape& tape, Index block, Var x, Var y_rows, Index batch,
                       std::span<const std::uint8_t> key_mask) {
  DiTBlock& blk = blocks_.at(static_cast<std::size_t>(block));
  const Index d = config_.d_model;
  const Index len = x.rows() / batch;
  Var mod1 = linear_leaf(tape, y_rows, blk.attn_mod.weight, blk.attn_mod.bias);
  Var h = adaln_modulate(x, mod1);
  Var qkv = linear_leaf(tape, h, blk.w_qkv, blk.b_qkv);
  Var a = attention(slice_cols(qkv, 0, d), slice_cols(qkv, d, d), slice_cols(qkv, 2 * d, d),
                    AttentionLayout{config_.heads, len, len}, key_mask);
  x = add(x, linear_leaf(tape, a, blk.w_out, blk.b_out));
  Var mod2 = linear_leaf(tape, y_rows, blk.ffn_mod.weight, blk.ffn_mod.bias);
  Var h2 = adaln_modulate(x, mod2);
  Var f = linear_leaf(tape, gelu(linear_leaf(tape, h2, blk.w_ff1, blk.b_ff1)), blk.w_ff2, blk.b_ff2);
  return add(x, f);
}

Var DiT::forward(Tape& tape, std::span<const WordList> prompts, Var x_t, std::span<const int> t,
                 std::span<const Injection> injections) {
  const auto batch = static_cast<Index>(prompts.size());
  const Index p = config_.max_prompt;
  const Index n_img = config_.image_tokens();
  const Index len = config_.sequence_length();
  if (batch < 1 || static_cast<Index>(t.size()) != batch) throw ShapeError("DiT: batch sizes disagree");
  if (x_t.rows() != batch * n_img || x_t.cols() != config_.patch_dim()) throw ShapeError("DiT: x_t has wrong shape");

  Matrix pooled(batch, config_.d_mod);
  for (Index b = 0; b < batch; ++b) pooled.row(b) = encoders_->map_prompt(prompts[static_cast<std::size_t>(b)]);
  Var y_base = add(time_modulation(tape, t), tape.constant(std::move(pooled)));

  std::vector<Index> row_sample(static_cast<std::size_t>(batch * len));
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(batch * len), 1);
  for (Index b = 0; b < batch; ++b) {
    const auto n_words = static_cast<Index>(prompts[static_cast<std::size_t>(b)].size());
    for (Index j = 0; j < len; ++j) {
      row_sample[static_cast<std::size_t>(b * len + j)] = b;
      if (j >= n_words && j < p) mask[static_cast<std::size_t>(b * len + j)] = 0;
    }
  }
  Var y_rows = gather_rows(y_base, row_sample);

  std::vector<const Injection*> active;
  std::vector<Index> inject_rows;
  for (const Injection& inj : injections) {
    if (inj.sample < 0 || inj.sample >= batch) throw RangeError("injection sample out of range");
    const auto n_words = static_cast<Index>(prompts[static_cast<std::size_t>(inj.sample)].size());
    if (inj.token < 0 || inj.token >= n_words) throw RangeError("concept token index outside the prompt");
    if (inj.delta.rows() != config_.blocks || inj.delta.cols() != config_.d_mod)
      throw ShapeError("concept directions must be blocks x d_mod");
    if (inj.scale == 0.0) continue;  // y' = y
    active.push_back(&inj);
    inject_rows.push_back(inj.sample * len + inj.token);
  }

  Var x = embed(tape, prompts, x_t);
  for (Index i = 0; i < config_.blocks; ++i) {
    Var y_i = y_rows;
    if (!active.empty()) {
      std::vector<Var> rows;
      for (const Injection* inj : active) rows.push_back(scale(slice_rows(inj->delta, i, 1), inj->scale));
      y_i = scatter_add_rows(y_rows, concat_rows(rows), inject_rows);
    }
    x = block_forward(tape, i, x, y_i, batch, mask);
  }

  std::vector<Index> image_rows, image_sample;
  for (Index b = 0; b < batch; ++b) {
    for (Index j = 0; j < n_img; ++j) {
      image_rows.push_back(b * len + p + j);
      image_sample.push_back(b);
    }
  }
  const Index d = config_.d_model;
  Var ximg = gather_rows(x, image_rows);
  Var fm = linear_leaf(tape, gather_rows(y_base, image_sample), final_mod_w_, final_mod_b_);
  Var h = add(mul(slice_cols(fm, 0, d), layer_norm(ximg)), slice_cols(fm, d, d));
  return linear_leaf(tape, h, w_final_, b_final_);
}

Image DiT::predict_noise(const Image& x_t, int t, const WordList& prompt, std::span<const ConceptDirections> concepts,
                         Scalar s) {
  if (x_t.height != config_.image_size || x_t.width != config_.image_size) throw ShapeError("predict_noise: image size");
  Tape tape(false);
  std::vector<Injection> inj;
  for (const auto& c : concepts) {
    inj.push_back(Injection{0, static_cast<Index>(c.token_index), tape.constant(c.directions), s});
  }
  const WordList prompts[1] = {prompt};
  const int ts[1] = {t};
  Var eps = forward(tape, prompts, tape.constant(patchify(x_t, config_.patch)), ts, inj);
  return unpatchify(eps.value(), config_.image_size, config_.image_size, config_.patch);
}

std::vector<Image> DiT::sample_batch(std::span<const WordList> prompts,
                                     std::span<const std::vector<ConceptDirections>> concepts, Scalar s, int steps,
                                     std::span<const std::uint64_t> seeds) {
  const int T = config_.timesteps;
  if (steps < 1 || steps > T) throw RangeError("sampling steps must be in [1, T]");
  const auto batch = static_cast<Index>(prompts.size());
  if (batch < 1 || seeds.size() != prompts.size() || (!concepts.empty() && concepts.size() != prompts.size()))
    throw ShapeError("sample_batch: batch sizes disagree");
  for (const auto& prompt : prompts) check_prompt(prompt);

  std::vector<int> taus(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    taus[static_cast<std::size_t>(k)] =
        steps == 1 ? T - 1 : static_cast<int>(std::lround(static_cast<Scalar>(k) * (T - 1) / (steps - 1)));
  }

  const Index n_img = config_.image_tokens();
  const Index pd = config_.patch_dim();
  std::vector<Rng> rngs;
  Matrix x(batch * n_img, pd);
  for (Index b = 0; b < batch; ++b) {
    rngs.emplace_back(seeds[static_cast<std::size_t>(b)]);
    x.middleRows(b * n_img, n_img) = rngs.back().normal_matrix(n_img, pd);
  }

  for (int k = steps - 1; k >= 0; --k) {
    const int t = taus[static_cast<std::size_t>(k)];
    const Scalar ab = schedule_.alpha_bar(t);
    const Scalar ab_prev = k > 0 ? schedule_.alpha_bar(taus[static_cast<std::size_t>(k - 1)]) : 1.0;
    const Scalar beta = 1.0 - ab / ab_prev;

    Tape tape(false);
    std::vector<Injection> inj;
    if (!concepts.empty()) {
      for (Index b = 0; b < batch; ++b) {
        for (const auto& c : concepts[static_cast<std::size_t>(b)]) {
          inj.push_back(Injection{b, static_cast<Index>(c.token_index), tape.constant(c.directions), s});
        }
      }
    }
    const std::vector<int> ts(static_cast<std::size_t>(batch), t);
    Matrix eps = forward(tape, prompts, tape.constant(x), ts, inj).value();

    Matrix x0 = ((x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab)).cwiseMax(-1.0).cwiseMin(1.0);
    Matrix mean = (std::sqrt(ab_prev) * beta / (1.0 - ab)) * x0 + (std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)) * x;
    if (k > 0) {
      const Scalar sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
      for (Index b = 0; b < batch; ++b) {
        mean.middleRows(b * n_img, n_img) += sigma * rngs[static_cast<std::size_t>(b)].normal_matrix(n_img, pd);
      }
    }
    x = std::move(mean);
  }

  std::vector<Image> out;
  for (Index b = 0; b < batch; ++b) out.push_back(from_latent(x.middleRows(b * n_img, n_img), config_.image_size, config_.patch));
  return out;
}

Image DiT::sample(const WordList& prompt, std::span<const ConceptDirections> concepts, Scalar s, int steps,
                  std::uint64_t seed) {
  const WordList prompts[1] = {prompt};
  const std::vector<ConceptDirections> cs(concepts.begin(), concepts.end());
  const std::vector<ConceptDirections> per[1] = {cs};
  const std::uint64_t seeds[1] = {seed};
  return sample_batch(prompts, per, s, steps, seeds).front();
}

void DiT::save(ModkFile& file, const std::string& prefix) const {
  const Matrix cfg = (Matrix(1, 13) << static_cast<Scalar>(config_.blocks), static_cast<Scalar>(config_.d_model),
                      static_cast<Scalar>(config_.heads), static_cast<Scalar>(config_.d_mod),
                      static_cast<Scalar>(config_.ffn_hidden), static_cast<Scalar>(config_.time_dim),
                      static_cast<Scalar>(config_.image_size), static_cast<Scalar>(config_.patch),
                      static_cast<Scalar>(config_.max_prompt), static_cast<Scalar>(config_.timesteps),
                      config_.beta_start, config_.beta_end, static_cast<Scalar>(config_.seed))
                         .finished();
  file.add_f64(prefix + "config", Tensor({13}, cfg));
  for (auto& [name, t] : const_cast<DiT*>(this)->named_parameters()) file.add_f64(prefix + name, *t);
}

void DiT::load(const ModkFile& file, const std::string& prefix) {
  const Tensor cfg = file.get_f64(prefix + "config");
  const auto d = cfg.data();
  const bool same = cfg.size() == 13 && d[0] == static_cast<Scalar>(config_.blocks) &&
                    d[1] == static_cast<Scalar>(config_.d_model) && d[2] == static_cast<Scalar>(config_.heads) &&
                    d[3] == static_cast<Scalar>(config_.d_mod) && d[4] == static_cast<Scalar>(config_.ffn_hidden) &&
                    d[5] == static_cast<Scalar>(config_.time_dim) && d[6] == static_cast<Scalar>(config_.image_size) &&
                    d[7] == static_cast<Scalar>(config_.patch) && d[8] == static_cast<Scalar>(config_.max_prompt) &&
                    d[9] == static_cast<Scalar>(config_.timesteps) && d[10] == config_.beta_start &&
                    d[11] == config_.beta_end;
  if (!same) throw FormatError("checkpoint was written for a different DiT configuration");
  for (auto& [name, t] : named_parameters()) {
    Tensor loaded = file.get_f64(prefix + name);
    if (loaded.shape() != t->shape()) throw FormatError("checkpoint tensor " + name + " has shape " + shape_string(loaded.shape()));
    t->value() = loaded.value();
    t->clear_grad();
  }
}

}  // namespace modadapter
