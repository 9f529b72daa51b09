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
#include <vector>

#include "modadapter/modk.hpp"
#include "modadapter/scene.hpp"

namespace modadapter {

/// Which attribute combinations a dataset draws from.
enum class Split : std::uint8_t {
  all = 0,
  train = 1,    // held-out tone/texture pairs excluded
  heldout = 2,  // only held-out pairs
};

struct ToySample {
  SceneSpec spec;
  std::uint64_t seed = 0;  // render seed
  Image image;
  Caption caption;

  bool operator==(const ToySample& o) const {
    return spec == o.spec && seed == o.seed && image == o.image && caption.words == o.caption.words;
  }
};

struct Dataset {
  std::uint64_t seed = 0;
  Split split = Split::all;
  std::vector<ToySample> samples;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Sample i uses sub-seed derive_seed(seed, i); specs are redrawn from that
/// sub-seed's stream until they fall in the split.
ToySample make_sample(std::uint64_t seed, std::size_t index, Split split);
Dataset generate_dataset(std::size_t n, std::uint64_t seed, Split split = Split::all);

ModkFile dataset_to_modk(const Dataset& ds);
/// Rebuilds captions from the stored specs and checks them against the
/// stored caption text.
Dataset dataset_from_modk(const ModkFile& file);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

/// generate_dataset + write_dataset.
Dataset gen_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& path,
                    Split split = Split::all);

}  // namespace modadapter
