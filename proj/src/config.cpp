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

#include "modadapter/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "modadapter/errors.hpp"
#include "modadapter/scene.hpp"

namespace modadapter {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  return v;
}

template <typename T>
void check_range(std::string_view key, T v, T lo, T hi) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << "value " << v << " for key '" << key << "' is outside [" << lo << ", " << hi << "]";
    throw ConfigError(os.str());
  }
}

struct Field {
  std::function<void(Config&, std::string_view, std::string_view)> set;
  std::function<void(const Config&, std::string_view)> check;
};

template <typename T>
Field numeric(T Config::*member, T lo, T hi) {
  return Field{[member](Config& c, std::string_view key, std::string_view v) { c.*member = parse_number<T>(key, v); },
               [member, lo, hi](const Config& c, std::string_view key) { check_range<T>(key, c.*member, lo, hi); }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  constexpr auto big = std::numeric_limits<std::int64_t>::max();
  static const std::map<std::string, Field, std::less<>> table{
      {"seed", numeric<std::uint64_t>(&Config::seed, 0, std::numeric_limits<std::uint64_t>::max())},
      {"vocab_path", Field{[](Config& c, std::string_view, std::string_view v) { c.vocab_path = std::string(v); },
                           [](const Config&, std::string_view) {}}},
      {"text_dim", numeric<Index>(&Config::text_dim, 2, 4096)},
      {"image_dim", numeric<Index>(&Config::image_dim, 1, 4096)},
      {"mod_dim", numeric<Index>(&Config::mod_dim, 2, 4096)},
      {"patch", numeric<Index>(&Config::patch, 1, kSceneSize)},
      {"encoder_seed", numeric<std::uint64_t>(&Config::encoder_seed, 0, std::numeric_limits<std::uint64_t>::max())},
      {"dit_blocks", numeric<Index>(&Config::dit_blocks, 1, 64)},
      {"d_model", numeric<Index>(&Config::d_model, 4, 4096)},
      {"heads", numeric<Index>(&Config::heads, 1, 64)},
      {"ffn_hidden", numeric<Index>(&Config::ffn_hidden, 1, 16384)},
      {"time_dim", numeric<Index>(&Config::time_dim, 2, 4096)},
      {"max_prompt", numeric<Index>(&Config::max_prompt, 12, 64)},
      {"timesteps", numeric<int>(&Config::timesteps, 2, 10000)},
      {"beta_start", numeric<Scalar>(&Config::beta_start, 1e-8, 0.999)},
      {"beta_end", numeric<Scalar>(&Config::beta_end, 1e-8, 0.999)},
      {"adapter_blocks", numeric<Index>(&Config::adapter_blocks, 1, 64)},
      {"n_experts", numeric<Index>(&Config::n_experts, 1, 7)},
      {"expert_hidden", numeric<Index>(&Config::expert_hidden, 1, 16384)},
      {"expert_init_std", numeric<Scalar>(&Config::expert_init_std, 0.0, 10.0)},
      {"train_samples", numeric<std::size_t>(&Config::train_samples, 1, 1000000)},
      {"backbone_steps", numeric<int>(&Config::backbone_steps, 0, 10000000)},
      {"backbone_batch", numeric<Index>(&Config::backbone_batch, 1, 4096)},
      {"backbone_lr", numeric<Scalar>(&Config::backbone_lr, 1e-8, 1.0)},
      {"drop_prob", numeric<Scalar>(&Config::drop_prob, 0.0, 1.0)},
      {"inject_prob", numeric<Scalar>(&Config::inject_prob, 0.0, 1.0)},
      {"ema_decay", numeric<Scalar>(&Config::ema_decay, 0.0, 0.999999)},
      {"warmup_steps", numeric<int>(&Config::warmup_steps, 0, 10000000)},
      {"pretrain_steps", numeric<int>(&Config::pretrain_steps, 0, 10000000)},
      {"pretrain_batch", numeric<Index>(&Config::pretrain_batch, 1, 4096)},
      {"pretrain_lr", numeric<Scalar>(&Config::pretrain_lr, 1e-8, 1.0)},
      {"train_steps", numeric<int>(&Config::train_steps, 0, 10000000)},
      {"train_batch", numeric<Index>(&Config::train_batch, 1, 4096)},
      {"train_lr", numeric<Scalar>(&Config::train_lr, 1e-8, 1.0)},
      {"weight_decay", numeric<Scalar>(&Config::weight_decay, 0.0, 1.0)},
      {"direction_scale", numeric<Scalar>(&Config::direction_scale, -100.0, 100.0)},
      {"sample_steps", numeric<int>(&Config::sample_steps, 1, 10000)},
      {"eval_samples", numeric<std::size_t>(&Config::eval_samples, 1, static_cast<std::size_t>(big))},
  };
  return table;
}

}  // namespace

void Config::set(std::string_view key, std::string_view value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  it->second.set(*this, key, value);
  it->second.check(*this, key);
}

void Config::validate() const {
  for (const auto& [key, field] : fields()) field.check(*this, key);
  if (beta_start > beta_end) throw ConfigError("key 'beta_start' must not exceed 'beta_end'");
  if (d_model % heads != 0) throw ConfigError("key 'heads' must divide 'd_model'");
  if (d_model % 4 != 0) throw ConfigError("key 'd_model' must be a multiple of 4");
  if (time_dim % 2 != 0) throw ConfigError("key 'time_dim' must be even");
  if (mod_dim % 2 != 0) throw ConfigError("key 'mod_dim' must be even");
  if (kSceneSize % patch != 0) throw ConfigError("key 'patch' must divide the image size");
  if (image_dim < 1) throw ConfigError("key 'image_dim' must be positive");
  if (sample_steps > timesteps) throw ConfigError("key 'sample_steps' must not exceed 'timesteps'");
}

EncoderConfig Config::encoder_config() const {
  return EncoderConfig{text_dim, image_dim, mod_dim, patch, encoder_seed};
}

DiTConfig Config::dit_config() const {
  DiTConfig c;
  c.blocks = dit_blocks;
  c.d_model = d_model;
  c.heads = heads;
  c.d_mod = mod_dim;
  c.ffn_hidden = ffn_hidden;
  c.time_dim = time_dim;
  c.image_size = kSceneSize;
  c.patch = patch;
  c.max_prompt = max_prompt;
  c.timesteps = timesteps;
  c.beta_start = beta_start;
  c.beta_end = beta_end;
  c.seed = derive_seed(seed, 0xb0);
  return c;
}

AdapterConfig Config::adapter_config(AdapterVariant variant) const {
  AdapterConfig c;
  c.blocks = adapter_blocks;
  c.experts = n_experts;
  c.queries = dit_blocks;
  c.d_mod = mod_dim;
  c.expert_hidden = expert_hidden;
  c.image_dim = image_dim;
  c.expert_init_std = expert_init_std;
  c.variant = variant;
  c.seed = derive_seed(seed, 0xad);
  return c;
}

Vocabulary Config::vocabulary() const {
  return vocab_path.empty() ? Vocabulary::builtin() : Vocabulary::load(vocab_path);
}

Config parse_config(std::string_view text) {
  Config c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "expected 'key = value'");
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_seed_override(Config& config) {
  if (const char* v = std::getenv(kSeedEnvVar); v && *v) {
    try {
      config.set("seed", v);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(kSeedEnvVar) + ": " + e.what());
    }
  }
}

}  // namespace modadapter
