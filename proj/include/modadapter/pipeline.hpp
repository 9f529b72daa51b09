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
#include <filesystem>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "modadapter/adapter.hpp"
#include "modadapter/config.hpp"
#include "modadapter/dataset.hpp"
#include "modadapter/dit.hpp"
#include "modadapter/evaluate.hpp"
#include "modadapter/training.hpp"

namespace modadapter {

/// Loss curve and routing statistics of one stage.
struct StageReport {
  std::vector<Scalar> losses;
  std::vector<std::uint64_t> expert_counts;
};

/// Backbone stage with the configured caption augmentation; the weight
/// average is copied into the model at the end.
StageReport train_backbone(DiT& dit, const Dataset& data, const Config& config, std::ostream* log = nullptr);

/// Adapter built from the configuration and a freshly fitted routing table.
std::unique_ptr<ModAdapter> make_adapter(const Config& config, const ToyEncoders& encoders, AdapterVariant variant,
                                         std::uint64_t seed);

StageReport pretrain_adapter(DiT& dit, ModAdapter& adapter, const Dataset& data, const Config& config,
                             std::uint64_t seed, std::ostream* log = nullptr);
StageReport train_adapter(DiT& dit, ModAdapter& adapter, const Dataset& data, const Config& config,
                          std::uint64_t seed, std::ostream* log = nullptr);

struct AblationRun {
  Metrics metrics;
  StageReport pretrain;
  StageReport train;
  std::uint64_t backbone_hash_before = 0;
  std::uint64_t backbone_hash_after = 0;
  std::uint64_t routing_hash_before = 0;
  std::uint64_t routing_hash_after = 0;
};

/// Trains one adapter variant on top of a frozen backbone under the shared
/// budgets and evaluates it on `bench`. The no_pretrain variant skips the
/// pretraining stage.
AblationRun run_ablation(AdapterVariant variant, const Config& config, DiT& backbone, const Dataset& data,
                         std::span<const EvalCase> bench, std::uint64_t seed, std::ostream* log = nullptr,
                         std::unique_ptr<ModAdapter>* trained = nullptr);

/// Checkpoint files: a MODK container tagged with its kind.
void save_backbone(const std::filesystem::path& path, const DiT& dit);
/// Throws FormatError if the file is not a backbone checkpoint for this
/// configuration.
void load_backbone(const std::filesystem::path& path, DiT& dit);
void save_adapter(const std::filesystem::path& path, const ModAdapter& adapter);
/// Rebuilds the adapter, its variant and routing table from the file.
std::unique_ptr<ModAdapter> load_adapter(const std::filesystem::path& path, const Config& config,
                                         const ToyEncoders& encoders);

}  // namespace modadapter
