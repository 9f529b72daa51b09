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

#include "modadapter/pipeline.hpp"

#include "modadapter/errors.hpp"
#include "modadapter/modk.hpp"
#include "modadapter/random.hpp"

namespace modadapter {

namespace {

void log_progress(std::ostream* log, std::string_view stage, int step, int total, Scalar loss) {
  if (!log) return;
  const int every = std::max(1, total / 10);
  if (step % every == 0 || step + 1 == total) *log << stage << " step " << step << " loss " << loss << "\n";
}

TrainerOptions options(const Config& c, Scalar lr, Index batch, int steps, std::uint64_t seed) {
  TrainerOptions o;
  o.optimizer.learning_rate = lr;
  o.optimizer.weight_decay = c.weight_decay;
  o.batch_size = batch;
  o.direction_scale = c.direction_scale;
  o.augment = BackboneAugment{c.drop_prob, c.inject_prob};
  o.total_steps = steps;
  o.warmup_steps = std::min(c.warmup_steps, steps);
  o.seed = seed;
  return o;
}

}  // namespace

StageReport train_backbone(DiT& dit, const Dataset& data, const Config& config, std::ostream* log) {
  TrainerOptions o = options(config, config.backbone_lr, config.backbone_batch, config.backbone_steps,
                             derive_seed(config.seed, 0xbb));
  o.ema_decay = config.ema_decay;
  Trainer trainer(dit, nullptr, o);
  trainer.set_stage(TrainStage::backbone);
  for (int i = 0; i < config.backbone_steps; ++i) {
    const Scalar l = trainer.diffusion_train_step(trainer.draw_batch(data));
    log_progress(log, "backbone", i, config.backbone_steps, l);
  }
  trainer.apply_ema();
  dit.set_trainable(false);
  return StageReport{trainer.losses(), {}};
}

std::unique_ptr<ModAdapter> make_adapter(const Config& config, const ToyEncoders& encoders, AdapterVariant variant,
                                         std::uint64_t seed) {
  AdapterConfig ac = config.adapter_config(variant);
  ac.seed = derive_seed(seed, 0xad);
  return std::make_unique<ModAdapter>(ac, encoders, fit_routing(encoders, ac.experts, derive_seed(seed, 0x4d)));
}

StageReport pretrain_adapter(DiT& dit, ModAdapter& adapter, const Dataset& data, const Config& config,
                             std::uint64_t seed, std::ostream* log) {
  Trainer trainer(dit, &adapter,
                  options(config, config.pretrain_lr, config.pretrain_batch, config.pretrain_steps, derive_seed(seed, 1)));
  trainer.set_stage(TrainStage::adapter_pretrain);
  for (int i = 0; i < config.pretrain_steps; ++i) {
    const Scalar l = trainer.pretrain_step(trainer.draw_pretrain_batch(data));
    log_progress(log, "pretrain", i, config.pretrain_steps, l);
  }
  return StageReport{trainer.losses(), trainer.expert_counts()};
}

StageReport train_adapter(DiT& dit, ModAdapter& adapter, const Dataset& data, const Config& config,
                          std::uint64_t seed, std::ostream* log) {
  Trainer trainer(dit, &adapter,
                  options(config, config.train_lr, config.train_batch, config.train_steps, derive_seed(seed, 2)));
  trainer.set_stage(TrainStage::adapter_train);
  for (int i = 0; i < config.train_steps; ++i) {
    const Scalar l = trainer.diffusion_train_step(trainer.draw_batch(data));
    log_progress(log, "adapter", i, config.train_steps, l);
  }
  return StageReport{trainer.losses(), trainer.expert_counts()};
}

AblationRun run_ablation(AdapterVariant variant, const Config& config, DiT& backbone, const Dataset& data,
                         std::span<const EvalCase> bench, std::uint64_t seed, std::ostream* log,
                         std::unique_ptr<ModAdapter>* trained) {
  AblationRun run;
  auto adapter = make_adapter(config, backbone.encoders(), variant, seed);
  run.backbone_hash_before = backbone.hash();
  run.routing_hash_before = adapter->routing().hash();
  if (variant != AdapterVariant::no_pretrain) run.pretrain = pretrain_adapter(backbone, *adapter, data, config, seed, log);
  run.train = train_adapter(backbone, *adapter, data, config, seed, log);
  run.backbone_hash_after = backbone.hash();
  run.routing_hash_after = adapter->routing().hash();
  run.metrics = evaluate(backbone, bench, adapter_directions(*adapter), config.direction_scale, config.sample_steps,
                         std::string(variant_name(variant)), seed);
  if (trained) *trained = std::move(adapter);
  return run;
}

void save_backbone(const std::filesystem::path& path, const DiT& dit) {
  ModkFile f;
  f.add_string("kind", "backbone");
  dit.save(f);
  f.write(path);
}

void load_backbone(const std::filesystem::path& path, DiT& dit) {
  const ModkFile f = ModkFile::read(path);
  if (!f.contains("kind") || f.get_string("kind") != "backbone")
    throw FormatError(path.string() + " is not a backbone checkpoint");
  dit.load(f);
  dit.set_trainable(false);
}

void save_adapter(const std::filesystem::path& path, const ModAdapter& adapter) {
  ModkFile f;
  f.add_string("kind", "adapter");
  adapter.save(f);
  f.write(path);
}

std::unique_ptr<ModAdapter> load_adapter(const std::filesystem::path& path, const Config& config,
                                         const ToyEncoders& encoders) {
  const ModkFile f = ModkFile::read(path);
  if (!f.contains("kind") || f.get_string("kind") != "adapter")
    throw FormatError(path.string() + " is not an adapter checkpoint");
  const auto cfg = f.get_i64("adapter/config");
  if (cfg.size() != 7 || cfg[6] < 0 || cfg[6] > static_cast<std::int64_t>(AdapterVariant::linear_gating))
    throw FormatError(path.string() + ": bad adapter configuration record");
  const auto variant = static_cast<AdapterVariant>(cfg[6]);
  auto adapter = std::make_unique<ModAdapter>(config.adapter_config(variant), encoders,
                                              RoutingTable::load(f, "adapter/routing/"));
  adapter->load(f);
  return adapter;
}

}  // namespace modadapter
