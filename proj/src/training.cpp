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

#include "modadapter/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "modadapter/errors.hpp"

namespace modadapter {

std::string_view stage_name(TrainStage s) {
  switch (s) {
    case TrainStage::backbone: return "backbone";
    case TrainStage::adapter_pretrain: return "adapter_pretrain";
    case TrainStage::adapter_train: return "adapter_train";
  }
  return "?";
}

PretrainExample pretrain_example(const ToySample& sample, Category category) {
  const ConceptAnnotation& ann = sample.caption.concept_for(category);
  return PretrainExample{sample.image, ann.concept_word, ann.positive_prompt()};
}

Var pretrain_loss(Tape& tape, ModAdapter& adapter, const ToyEncoders& encoders,
                  std::span<const PretrainExample> batch, std::vector<Index>* experts) {
  const Index n = adapter.config().queries;
  std::vector<ConceptInput> inputs;
  Matrix targets(static_cast<Index>(batch.size()) * n, adapter.config().d_mod);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    inputs.push_back(ConceptInput{encoders.image().encode_image_patches(batch[b].concept_image), batch[b].concept_word});
    targets.middleRows(static_cast<Index>(b) * n, n) = encoders.map_prompt(batch[b].positive).replicate(n, 1);
  }
  AdapterOutput out = adapter.forward(tape, inputs);
  if (experts) *experts = out.experts;
  return scale(sum_squares(sub(out.features, tape.constant(std::move(targets)))),
               1.0 / static_cast<Scalar>(static_cast<Index>(batch.size()) * n));
}

Var epsilon_mse(Var pred, const Matrix& eps) {
  if (pred.rows() != eps.rows() || pred.cols() != eps.cols()) throw ShapeError("epsilon_mse: shape mismatch");
  Var diff = sub(pred, pred.tape().constant(eps));
  return mean(mul(diff, diff));
}

Matrix noised_latents(const NoiseSchedule& schedule, const Matrix& x0, std::span<const int> t, const Matrix& eps,
                      Index rows_per_sample) {
  if (x0.rows() != static_cast<Index>(t.size()) * rows_per_sample || eps.rows() != x0.rows() ||
      eps.cols() != x0.cols())
    throw ShapeError("noised_latents: batch layout mismatch");
  Matrix x(x0.rows(), x0.cols());
  for (std::size_t b = 0; b < t.size(); ++b) {
    const Scalar ab = schedule.alpha_bar(t[b]);
    const Index r0 = static_cast<Index>(b) * rows_per_sample;
    x.middleRows(r0, rows_per_sample) = std::sqrt(ab) * x0.middleRows(r0, rows_per_sample) +
                                        std::sqrt(1.0 - ab) * eps.middleRows(r0, rows_per_sample);
  }
  return x;
}

Trainer::Trainer(DiT& dit, ModAdapter* adapter, const TrainerOptions& options)
    : dit_(&dit), adapter_(adapter), options_(options), rng_(derive_seed(options.seed, 0x7a1)) {
  if (options_.batch_size < 1) throw RangeError("batch size must be >= 1");
  if (adapter_ && adapter_->config().queries != dit.config().blocks)
    throw ShapeError("adapter query count must equal the backbone block count");
  if (adapter_) expert_counts_.assign(static_cast<std::size_t>(adapter_->config().experts), 0);
  set_stage(TrainStage::backbone);
}

void Trainer::set_stage(TrainStage stage) {
  if (stage != TrainStage::backbone && !adapter_) throw StageError("adapter stages need an adapter");
  stage_ = stage;
  const bool backbone = stage == TrainStage::backbone;
  dit_->set_trainable(backbone);
  if (adapter_) {
    for (Tensor* t : adapter_->parameters()) {
      t->set_requires_grad(!backbone);
      if (backbone) t->clear_grad();
    }
  }
  trainable_ = backbone ? dit_->parameters() : adapter_->parameters();
  optim_ = make_optim_state(trainable_, options_.optimizer);
  stage_step_ = 0;
  ema_.clear();
  if (backbone && options_.ema_decay > 0) {
    for (Tensor* t : trainable_) ema_.push_back(t->value());
  }
}

void Trainer::set_schedule(int total_steps, int warmup_steps) {
  if (total_steps < 0 || warmup_steps < 0) throw RangeError("schedule steps must be >= 0");
  options_.total_steps = total_steps;
  options_.warmup_steps = warmup_steps;
}

Scalar Trainer::current_lr() const {
  Scalar lr = options_.optimizer.learning_rate;
  if (options_.warmup_steps > 0 && stage_step_ < options_.warmup_steps)
    lr *= static_cast<Scalar>(stage_step_ + 1) / static_cast<Scalar>(options_.warmup_steps);
  if (options_.total_steps > 0) {
    const Scalar frac = std::min(1.0, static_cast<Scalar>(stage_step_) / static_cast<Scalar>(options_.total_steps));
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  }
  return lr;
}

void Trainer::step_optimizer() {
  optim_.config.learning_rate = current_lr();
  adamw_step(trainable_, optim_);
  ++stage_step_;
  if (!ema_.empty()) {
    const Scalar d = options_.ema_decay;
    for (std::size_t i = 0; i < trainable_.size(); ++i) ema_[i] = d * ema_[i] + (1.0 - d) * trainable_[i]->value();
  }
}

void Trainer::apply_ema() {
  if (ema_.empty()) return;
  for (std::size_t i = 0; i < trainable_.size(); ++i) trainable_[i]->value() = ema_[i];
}

void Trainer::require(bool ok, std::string_view what) const {
  if (!ok) throw StageError(std::string(what) + " called in stage " + std::string(stage_name(stage_)));
}

void Trainer::reset_expert_counts() { std::fill(expert_counts_.begin(), expert_counts_.end(), 0); }

void Trainer::count_experts(const std::vector<Index>& chosen) {
  for (Index e : chosen) {
    if (e >= 0 && e < static_cast<Index>(expert_counts_.size())) ++expert_counts_[static_cast<std::size_t>(e)];
  }
}

std::vector<const ToySample*> Trainer::draw_batch(const Dataset& data) {
  if (data.size() == 0) throw RangeError("empty dataset");
  std::vector<const ToySample*> out;
  for (Index b = 0; b < options_.batch_size; ++b) out.push_back(&data.samples[rng_.below(data.size())]);
  return out;
}

std::vector<PretrainExample> Trainer::draw_pretrain_batch(const Dataset& data) {
  std::vector<PretrainExample> out;
  for (const ToySample* s : draw_batch(data))
    out.push_back(pretrain_example(*s, kCategories[rng_.below(kCategories.size())]));
  return out;
}

Scalar Trainer::pretrain_step(std::span<const PretrainExample> batch) {
  require(stage_ == TrainStage::adapter_pretrain, "pretrain_step");
  if (batch.empty()) throw RangeError("empty batch");
  Tape tape;
  std::vector<Index> chosen;
  Var loss = pretrain_loss(tape, *adapter_, dit_->encoders(), batch, &chosen);
  count_experts(chosen);
  const Scalar value = loss.item();
  zero_grads(trainable_);
  tape.backward(loss);
  step_optimizer();
  losses_.push_back(value);
  return value;
}

Scalar Trainer::diffusion_train_step(std::span<const ToySample* const> batch) {
  require(stage_ == TrainStage::backbone || stage_ == TrainStage::adapter_train, "diffusion_train_step");
  if (batch.empty()) throw RangeError("empty batch");
  const DiTConfig& cfg = dit_->config();
  const ToyEncoders& enc = dit_->encoders();
  const auto bsz = static_cast<Index>(batch.size());
  const Index n_img = cfg.image_tokens();

  Tape tape;
  std::vector<WordList> prompts;
  std::vector<int> ts;
  Matrix x0(bsz * n_img, cfg.patch_dim());
  Matrix eps(bsz * n_img, cfg.patch_dim());
  std::vector<Injection> injections;
  std::vector<ConceptInput> concepts;
  std::vector<Index> concept_tokens;

  for (Index b = 0; b < bsz; ++b) {
    const ToySample& s = *batch[static_cast<std::size_t>(b)];
    x0.middleRows(b * n_img, n_img) = to_latent(s.image, cfg.patch);
    if (stage_ == TrainStage::backbone) {
      std::vector<Category> omit;
      for (Category c : kCategories) {
        if (rng_.uniform() < options_.augment.drop_prob) omit.push_back(c);
      }
      Caption cap = caption(s.spec, omit);
      for (Category c : omit) {
        if (rng_.uniform() >= options_.augment.inject_prob) continue;
        const RowVector dir = enc.map_prompt(s.caption.concept_for(c).attribute_words);
        injections.push_back(Injection{b, static_cast<Index>(cap.concept_for(c).token_index),
                                       tape.constant(dir.replicate(cfg.blocks, 1)), options_.direction_scale});
      }
      prompts.push_back(std::move(cap.words));
    } else {
      // one concept per sample; its attribute word leaves the caption so the
      // direction has to carry it
      const Category c = kCategories[rng_.below(kCategories.size())];
      const std::array<Category, 1> omit{c};
      Caption cap = caption(s.spec, omit);
      const ConceptAnnotation& ann = cap.concept_for(c);
      concepts.push_back(ConceptInput{enc.image().encode_image_patches(s.image), ann.concept_word});
      concept_tokens.push_back(static_cast<Index>(ann.token_index));
      prompts.push_back(std::move(cap.words));
    }
    const int t = static_cast<int>(rng_.below(static_cast<std::uint64_t>(cfg.timesteps)));
    ts.push_back(t);
    eps.middleRows(b * n_img, n_img) = rng_.normal_matrix(n_img, cfg.patch_dim());
  }

  if (stage_ == TrainStage::adapter_train) {
    AdapterOutput out = adapter_->forward(tape, concepts);
    count_experts(out.experts);
    const Index n = adapter_->config().queries;
    for (Index b = 0; b < bsz; ++b) {
      injections.push_back(Injection{b, concept_tokens[static_cast<std::size_t>(b)],
                                     slice_rows(out.directions, b * n, n), options_.direction_scale});
    }
  }

  Matrix xt = noised_latents(dit_->schedule(), x0, ts, eps, n_img);
  Var pred = dit_->forward(tape, prompts, tape.constant(std::move(xt)), ts, injections);
  Var loss = epsilon_mse(pred, eps);
  const Scalar value = loss.item();
  zero_grads(trainable_);
  tape.backward(loss);
  step_optimizer();
  losses_.push_back(value);
  return value;
}

}  // namespace modadapter
