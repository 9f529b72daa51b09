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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modadapter/adapter.hpp"
#include "modadapter/dataset.hpp"
#include "modadapter/dit.hpp"
#include "modadapter/optim.hpp"
#include "modadapter/random.hpp"

namespace modadapter {

enum class TrainStage { backbone, adapter_pretrain, adapter_train };

std::string_view stage_name(TrainStage s);

/// Caption augmentation for the backbone stage. Each attribute word is
/// dropped with `drop_prob`; a dropped attribute is then re-supplied as the
/// direction M(emb(attribute words)) at its concept token with
/// `inject_prob`.
struct BackboneAugment {
  Scalar drop_prob = 0.5;
  Scalar inject_prob = 0.5;
};

struct TrainerOptions {
  AdamWConfig optimizer;
  Index batch_size = 16;
  Scalar direction_scale = 1.0;  // s
  BackboneAugment augment;
  /// Steps of the current stage for the cosine decay; 0 keeps the rate
  /// constant.
  int total_steps = 0;
  int warmup_steps = 0;
  /// Exponential moving average of backbone weights (0 disables).
  Scalar ema_decay = 0.0;
  std::uint64_t seed = 1;
};

/// (concept image, p0, p+) triple for the pretraining objective.
struct PretrainExample {
  Image concept_image;
  std::string concept_word;
  WordList positive;
};

/// Pretraining example for one concept of a sample.
PretrainExample pretrain_example(const ToySample& sample, Category category);

/// (1/N) sum_i ||F+_i - M(emb(p+))||^2, averaged over the batch.
Var pretrain_loss(Tape& tape, ModAdapter& adapter, const ToyEncoders& encoders,
                  std::span<const PretrainExample> batch, std::vector<Index>* experts = nullptr);

/// mean((pred - eps)^2)
Var epsilon_mse(Var pred, const Matrix& eps);

/// Noised latents for a batch: x_t = sqrt(abar) x0 + sqrt(1 - abar) eps.
Matrix noised_latents(const NoiseSchedule& schedule, const Matrix& x0, std::span<const int> t, const Matrix& eps,
                      Index rows_per_sample);

class Trainer {
 public:
  Trainer(DiT& dit, ModAdapter* adapter, const TrainerOptions& options);

  /// Selects the trainable set and resets the optimizer. The backbone
  /// receives gradients only in the backbone stage.
  void set_stage(TrainStage stage);
  TrainStage stage() const { return stage_; }

  /// One optimizer step of the pretraining objective. The backbone is not
  /// touched.
  Scalar pretrain_step(std::span<const PretrainExample> batch);
  /// One optimizer step of the noise-prediction objective. In adapter_train
  /// every sample carries exactly one injected concept, chosen uniformly.
  Scalar diffusion_train_step(std::span<const ToySample* const> batch);

  /// Draws a batch uniformly with replacement from `data`.
  std::vector<const ToySample*> draw_batch(const Dataset& data);
  std::vector<PretrainExample> draw_pretrain_batch(const Dataset& data);

  /// Expert selections counted over adapter steps (per concept and adapter
  /// block).
  const std::vector<std::uint64_t>& expert_counts() const { return expert_counts_; }
  void reset_expert_counts();

  /// Copies the backbone moving average into the live weights.
  void apply_ema();
  void set_schedule(int total_steps, int warmup_steps);
  /// Learning rate of the next step.
  Scalar current_lr() const;

  const std::vector<Scalar>& losses() const { return losses_; }
  Rng& rng() { return rng_; }

 private:
  void require(bool ok, std::string_view what) const;
  void count_experts(const std::vector<Index>& chosen);
  void step_optimizer();

  DiT* dit_;
  ModAdapter* adapter_;
  TrainerOptions options_;
  TrainStage stage_ = TrainStage::backbone;
  Rng rng_;
  OptimState optim_;
  std::vector<Tensor*> trainable_;
  std::vector<Matrix> ema_;
  int stage_step_ = 0;
  std::vector<std::uint64_t> expert_counts_;
  std::vector<Scalar> losses_;
};

}  // namespace modadapter
