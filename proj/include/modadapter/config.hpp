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
#include <string>
#include <string_view>

#include "modadapter/adapter.hpp"
#include "modadapter/dit.hpp"
#include "modadapter/encoders.hpp"
#include "modadapter/training.hpp"

namespace modadapter {

/// Every tunable of the pipeline. Defaults are the toy-scale settings.
struct Config {
  std::uint64_t seed = 1;
  std::string vocab_path;  // empty: built-in vocabulary

  // encoders
  Index text_dim = 64;
  Index image_dim = 48;
  Index mod_dim = 32;
  Index patch = 4;
  std::uint64_t encoder_seed = 1234;

  // backbone
  Index dit_blocks = 6;
  Index d_model = 64;
  Index heads = 4;
  Index ffn_hidden = 128;
  Index time_dim = 64;
  Index max_prompt = 12;
  int timesteps = 100;
  Scalar beta_start = 1e-3;
  Scalar beta_end = 0.2;

  // adapter
  Index adapter_blocks = 2;
  Index n_experts = 4;
  Index expert_hidden = 64;
  Scalar expert_init_std = 0.02;

  // data
  std::size_t train_samples = 4096;

  // schedules
  int backbone_steps = 20000;
  Index backbone_batch = 16;
  Scalar backbone_lr = 2e-3;
  Scalar drop_prob = 0.5;
  Scalar inject_prob = 0.5;
  Scalar ema_decay = 0.999;  // backbone weight average, 0 disables
  int warmup_steps = 200;    // linear warmup of every stage
  int pretrain_steps = 2000;
  Index pretrain_batch = 32;
  Scalar pretrain_lr = 1e-3;
  int train_steps = 5000;
  Index train_batch = 8;
  Scalar train_lr = 1e-4;
  Scalar weight_decay = 0.0;
  Scalar direction_scale = 1.0;

  // evaluation
  int sample_steps = 25;
  std::size_t eval_samples = 64;

  /// Range checks; ConfigError names the key.
  void validate() const;
  void set(std::string_view key, std::string_view value);

  EncoderConfig encoder_config() const;
  DiTConfig dit_config() const;
  AdapterConfig adapter_config(AdapterVariant variant = AdapterVariant::full) const;
  Vocabulary vocabulary() const;
};

/// `key = value` lines, `#` starts a comment, blank lines ignored. Missing
/// keys keep their defaults. Errors name the offending line.
Config load_config(const std::filesystem::path& path);
Config parse_config(std::string_view text);

/// Name of the environment variable that overrides Config::seed.
inline constexpr const char* kSeedEnvVar = "MODADAPTER_SEED";
/// Applies the environment override, if set.
void apply_seed_override(Config& config);

}  // namespace modadapter
