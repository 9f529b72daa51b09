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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "modadapter/adapter.hpp"
#include "modadapter/dit.hpp"
#include "modadapter/scene.hpp"

namespace modadapter {

/// Concept-preservation and prompt-fidelity scores of one run.
struct Metrics {
  std::string variant = "full";
  std::uint64_t seed = 0;
  Scalar cp = 0;
  Scalar pf = 0;
  Scalar cp_pf = 0;
  std::size_t n_samples = 0;
  /// CP per personalized category name.
  std::map<std::string, Scalar> per_concept;
};

/// One personalized concept of a benchmark case.
struct BenchConcept {
  Category category = Category::tone;
  std::string word;             // concept word in the prompt
  std::size_t token_index = 0;  // its position in the prompt
  int value = 0;                // attribute value the concept image shows
  Image image;
};

struct EvalCase {
  SceneSpec target;
  WordList prompt;  // caption of the target without the personalized attribute words
  std::vector<BenchConcept> concepts;
  /// Categories still named in the prompt and scored for fidelity.
  std::vector<Category> fidelity;
  std::uint64_t sample_seed = 0;
};

/// Held-out benchmark: target specs and concept images are drawn from
/// attribute combinations withheld from training. Each concept image is a
/// different scene sharing only the personalized attribute with the target.
/// Shape cannot be personalized (its attribute is the unprobed color).
std::vector<EvalCase> make_bench(std::size_t n, std::uint64_t seed, std::span<const Category> personalized);

/// Directions (blocks x d_mod) for one benchmark concept.
using DirectionFn = std::function<Matrix(const BenchConcept&)>;

DirectionFn adapter_directions(ModAdapter& adapter);
/// M(emb(attribute words)) at every block: what a perfect adapter would
/// produce under the pretraining target.
DirectionFn attribute_directions(const ToyEncoders& encoders, Index blocks);

/// Samples every case. An empty provider samples without concepts.
std::vector<Image> generate_bench(DiT& dit, std::span<const EvalCase> bench, const DirectionFn& directions, Scalar s,
                                  int steps, std::size_t batch = 16);

/// Probes `images[i]` against `bench[i]`.
Metrics score_images(std::span<const EvalCase> bench, std::span<const Image> images, std::string variant = "full",
                     std::uint64_t seed = 0);

Metrics evaluate(DiT& dit, std::span<const EvalCase> bench, const DirectionFn& directions, Scalar s, int steps,
                 std::string variant = "full", std::uint64_t seed = 0);

inline constexpr const char* kMetricsCsvHeader = "variant,seed,cp,pf,cp_pf,n_samples";

std::string metrics_csv(std::span<const Metrics> rows);
/// Inverse of metrics_csv; per-concept breakdowns are not stored.
std::vector<Metrics> parse_metrics_csv(std::string_view text);
void write_metrics_csv(const std::filesystem::path& path, std::span<const Metrics> rows);

/// Share of expert selections when every routing word is paired with every
/// image, counted over all adapter blocks.
std::vector<Scalar> expert_shares(ModAdapter& adapter, std::span<const Image> images);

}  // namespace modadapter
