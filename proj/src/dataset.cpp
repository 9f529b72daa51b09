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

#include "modadapter/dataset.hpp"

#include <string>

#include "modadapter/errors.hpp"
#include "modadapter/random.hpp"

namespace modadapter {

namespace {

bool in_split(const SceneSpec& s, Split split) {
  switch (split) {
    case Split::all: return true;
    case Split::train: return !is_heldout_combo(s);
    case Split::heldout: return is_heldout_combo(s);
  }
  return false;
}

}  // namespace

ToySample make_sample(std::uint64_t seed, std::size_t index, Split split) {
  const std::uint64_t sub = derive_seed(seed, index);
  ToySample s;
  for (std::uint64_t attempt = 0;; ++attempt) {
    s.spec = random_spec(derive_seed(sub, attempt));
    if (in_split(s.spec, split)) break;
  }
  s.seed = sub;
  s.image = render_scene(s.spec, sub);
  s.caption = caption(s.spec);
  return s;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, Split split) {
  if (n < 1) throw RangeError("dataset size must be at least 1");
  Dataset ds;
  ds.seed = seed;
  ds.split = split;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.samples.push_back(make_sample(seed, i, split));
  return ds;
}

ModkFile dataset_to_modk(const Dataset& ds) {
  const std::size_t n = ds.size();
  const auto side = static_cast<std::size_t>(kSceneSize);
  Tensor images({n, side, side, 3});
  std::vector<std::int64_t> specs, seeds, tokens;
  std::string captions;
  for (std::size_t i = 0; i < n; ++i) {
    const ToySample& s = ds.samples[i];
    if (s.image.height != kSceneSize || s.image.width != kSceneSize) throw ShapeError("dataset: image size");
    images.value().middleRows(static_cast<Index>(i * side * side), static_cast<Index>(side * side)) = s.image.rgb;
    for (int v : {s.spec.shape, s.spec.color, s.spec.texture, s.spec.tone, s.spec.light, s.spec.placement})
      specs.push_back(v);
    seeds.push_back(static_cast<std::int64_t>(s.seed));
    for (Category c : kCategories) tokens.push_back(static_cast<std::int64_t>(s.caption.concept_for(c).token_index));
    captions += join_words(s.caption.words);
    captions += '\n';
  }
  ModkFile f;
  f.add_string("kind", "dataset");
  const std::int64_t meta[2] = {static_cast<std::int64_t>(ds.seed), static_cast<std::int64_t>(ds.split)};
  f.add_i64("meta", {2}, meta);
  f.add_f64("images", images);
  f.add_i64("scene_specs", {n, 6}, specs);
  f.add_i64("sample_seeds", {n}, seeds);
  f.add_i64("concept_tokens", {n, 4}, tokens);
  f.add_string("captions", captions);
  return f;
}

Dataset dataset_from_modk(const ModkFile& f) {
  if (!f.contains("kind") || f.get_string("kind") != "dataset") throw FormatError("not a dataset file");
  const auto meta = f.get_i64("meta");
  const Tensor images = f.get_f64("images");
  const auto specs = f.get_i64("scene_specs");
  const auto seeds = f.get_i64("sample_seeds");
  const auto tokens = f.get_i64("concept_tokens");
  const std::string captions = f.get_string("captions");
  const auto side = static_cast<std::size_t>(kSceneSize);
  if (meta.size() != 2 || images.rank() != 4 || images.shape()[1] != side || images.shape()[2] != side ||
      images.shape()[3] != 3)
    throw FormatError("dataset: bad image section");
  const std::size_t n = images.shape()[0];
  if (specs.size() != 6 * n || seeds.size() != n || tokens.size() != 4 * n)
    throw FormatError("dataset: section sizes disagree");
  if (meta[1] < 0 || meta[1] > 2) throw FormatError("dataset: bad split tag");
  Dataset ds;
  ds.seed = static_cast<std::uint64_t>(meta[0]);
  ds.split = static_cast<Split>(meta[1]);
  std::size_t line_start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ToySample s;
    const std::int64_t* v = &specs[6 * i];
    s.spec = SceneSpec{static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                       static_cast<int>(v[3]), static_cast<int>(v[4]), static_cast<int>(v[5])};
    try {
      s.spec.validate();
    } catch (const RangeError& e) {
      throw FormatError(std::string("dataset: ") + e.what());
    }
    s.seed = static_cast<std::uint64_t>(seeds[i]);
    s.image = Image(kSceneSize, kSceneSize);
    s.image.rgb = images.value().middleRows(static_cast<Index>(i * side * side), static_cast<Index>(side * side));
    s.caption = caption(s.spec);
    const std::size_t line_end = captions.find('\n', line_start);
    if (line_end == std::string::npos) throw FormatError("dataset: missing caption");
    if (captions.substr(line_start, line_end - line_start) != join_words(s.caption.words))
      throw FormatError("dataset: caption of sample " + std::to_string(i) + " disagrees with its spec");
    line_start = line_end + 1;
    for (std::size_t c = 0; c < 4; ++c) {
      if (static_cast<std::size_t>(tokens[4 * i + c]) != s.caption.concept_for(kCategories[c]).token_index)
        throw FormatError("dataset: concept token index mismatch");
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) { dataset_to_modk(ds).write(path); }

Dataset read_dataset(const std::filesystem::path& path) { return dataset_from_modk(ModkFile::read(path)); }

Dataset gen_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& path, Split split) {
  Dataset ds = generate_dataset(n, seed, split);
  write_dataset(path, ds);
  return ds;
}

}  // namespace modadapter
