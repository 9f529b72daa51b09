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

#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "modadapter/errors.hpp"

namespace modadapter {
namespace {

TEST(ConfigParse, DefaultsSurviveEmptyInput) {
  Config c = parse_config("# nothing here\n\n   \n");
  Config d;
  EXPECT_EQ(c.seed, d.seed);
  EXPECT_EQ(c.dit_blocks, d.dit_blocks);
  EXPECT_EQ(c.train_lr, d.train_lr);
}

TEST(ConfigParse, ReadsKeysValuesAndComments) {
  Config c = parse_config("seed = 42\n n_experts=3 # fewer\nbackbone_lr = 2.5e-4\r\nvocab_path = words.txt\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.n_experts, 3);
  EXPECT_EQ(c.backbone_lr, 2.5e-4);
  EXPECT_EQ(c.vocab_path, "words.txt");
}

TEST(ConfigParse, ErrorsNameTheLine) {
  auto message = [](std::string_view text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("seed = 1\nbogus = 3\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("seed = 1\n\nn_experts = 9\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("seed = x\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("just words\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("heads = 5\n").find("heads"), std::string::npos);
  EXPECT_NE(message("sample_steps = 101\n").find("sample_steps"), std::string::npos);
}

TEST(ConfigParse, RangeChecks) {
  Config c;
  EXPECT_THROW(c.set("n_experts", "0"), ConfigError);
  EXPECT_THROW(c.set("n_experts", "8"), ConfigError);
  EXPECT_THROW(c.set("drop_prob", "1.5"), ConfigError);
  EXPECT_THROW(c.set("backbone_lr", "-1"), ConfigError);
  EXPECT_NO_THROW(c.set("n_experts", "7"));
}

TEST(ConfigParse, MissingFile) { EXPECT_THROW(load_config("/nonexistent/x.cfg"), ConfigError); }

TEST(ConfigParse, LoadsFromDisk) {
  const std::string path = ::testing::TempDir() + "/cfg_test.cfg";
  std::ofstream(path) << "seed = 9\n";
  EXPECT_EQ(load_config(path).seed, 9u);
}

TEST(ConfigParse, SeedOverrideFromEnvironment) {
  Config c;
  ::setenv(kSeedEnvVar, "123", 1);
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 123u);
  ::setenv(kSeedEnvVar, "abc", 1);
  EXPECT_THROW(apply_seed_override(c), ConfigError);
  ::unsetenv(kSeedEnvVar);
  c.seed = 5;
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 5u);
}

TEST(ConfigDerived, ComponentConfigsAgree) {
  Config c = parse_config("seed = 3\nn_experts = 2\ndit_blocks = 4\nmod_dim = 16\n");
  EXPECT_EQ(c.encoder_config().mod_dim, 16);
  EXPECT_EQ(c.dit_config().blocks, 4);
  EXPECT_EQ(c.dit_config().d_mod, 16);
  AdapterConfig a = c.adapter_config(AdapterVariant::no_moe);
  EXPECT_EQ(a.queries, 4);
  EXPECT_EQ(a.experts, 2);
  EXPECT_EQ(a.d_mod, 16);
  EXPECT_EQ(a.variant, AdapterVariant::no_moe);
  Config d = parse_config("seed = 4\n");
  EXPECT_NE(c.dit_config().seed, d.dit_config().seed);
}

}  // namespace
}  // namespace modadapter
