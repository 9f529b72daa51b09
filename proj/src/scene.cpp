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

#include "modadapter/scene.hpp"

#include <algorithm>
#include <cmath>

#include "modadapter/errors.hpp"
#include "modadapter/random.hpp"

namespace modadapter {

namespace {

constexpr std::array<std::array<Scalar, 3>, 4> kTints{{
    {1.00, 0.65, 0.35},  // warm
    {0.35, 0.65, 1.00},  // cool
    {0.45, 1.00, 0.45},  // green
    {0.80, 0.80, 0.80},  // neutral
}};

constexpr std::array<std::array<Scalar, 3>, 4> kColorRgb{{
    {1.00, 0.15, 0.15},  // red
    {0.15, 0.15, 1.00},  // blue
    {1.00, 1.00, 0.15},  // yellow
    {0.75, 0.15, 0.95},  // purple
}};

constexpr Scalar kBackgroundBase = 0.35;
constexpr Scalar kBackgroundPattern = 0.30;
constexpr Scalar kLightSpan = 0.5;
constexpr Scalar kDither = 0.004;

// 1 on the two central columns of every 4-pixel cell, so each pattern is
// mirror-symmetric about the image centre.
int band(Index v) {
  const Index m = v % 4;
  return (m == 1 || m == 2) ? 1 : 0;
}

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::shape: return "shape";
    case Category::texture: return "texture";
    case Category::tone: return "tone";
    case Category::light: return "light";
  }
  return "";
}

std::optional<Category> parse_category(std::string_view name) {
  for (Category c : kCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

const std::array<std::string_view, 4>& category_values(Category c) {
  switch (c) {
    case Category::shape: return kShapes;
    case Category::texture: return kTextures;
    case Category::tone: return kTones;
    case Category::light: return kLights;
  }
  throw RangeError("unknown category");
}

std::string_view category_word(Category c) {
  switch (c) {
    case Category::shape: return "";
    case Category::texture: return "texture";
    case Category::tone: return "tone";
    case Category::light: return "light";
  }
  return "";
}

int SceneSpec::value(Category c) const {
  switch (c) {
    case Category::shape: return shape;
    case Category::texture: return texture;
    case Category::tone: return tone;
    case Category::light: return light;
  }
  throw RangeError("unknown category");
}

int& SceneSpec::value(Category c) {
  switch (c) {
    case Category::shape: return shape;
    case Category::texture: return texture;
    case Category::tone: return tone;
    case Category::light: return light;
  }
  throw RangeError("unknown category");
}

void SceneSpec::validate() const {
  auto in4 = [](int v) { return v >= 0 && v < 4; };
  if (!in4(shape) || !in4(color) || !in4(texture) || !in4(tone) || !in4(light) || placement < 0 ||
      placement >= kPlacementCount) {
    throw RangeError("scene spec holds a value outside its enumeration");
  }
}

SceneSpec random_spec(std::uint64_t seed) {
  Rng rng(seed);
  SceneSpec s;
  s.shape = static_cast<int>(rng.below(4));
  s.color = static_cast<int>(rng.below(4));
  s.texture = static_cast<int>(rng.below(4));
  s.tone = static_cast<int>(rng.below(4));
  s.light = static_cast<int>(rng.below(4));
  s.placement = static_cast<int>(rng.below(kPlacementCount));
  return s;
}

bool is_heldout_combo(const SceneSpec& spec) { return (spec.color + spec.light) % 4 == 0; }

int texture_pattern(int texture, Index y, Index x) {
  switch (texture) {
    case 0: return band(x);                 // stripes
    case 1: return band(x) ^ band(y);       // checker
    case 2: return band(x) & band(y);       // dots
    default: return 0;                      // plain
  }
}

bool shape_covers(int shape, int offset_x, int offset_y, Index y, Index x) {
  const Scalar cx = 7.5 + offset_x;
  const Scalar cy = 7.5 + offset_y;
  const Scalar dx = static_cast<Scalar>(x) - cx;
  const Scalar dy = static_cast<Scalar>(y) - cy;
  switch (shape) {
    case 0: return dx * dx + dy * dy <= 3.6 * 3.6;
    case 1: return std::abs(dx) <= 3.0 && std::abs(dy) <= 3.0;
    case 2: {
      if (dy < -3.0 || dy > 3.0) return false;
      const Scalar v = (dy + 3.5) / 7.0;
      return std::abs(dx) <= 3.5 * v;
    }
    case 3:
      return (std::abs(dx) <= 1.0 && std::abs(dy) <= 3.5) || (std::abs(dy) <= 1.0 && std::abs(dx) <= 3.5);
    default: return false;
  }
}

const std::array<Scalar, 3>& tone_tint(int tone) { return kTints.at(static_cast<std::size_t>(tone)); }
const std::array<Scalar, 3>& color_rgb(int color) { return kColorRgb.at(static_cast<std::size_t>(color)); }

Scalar light_factor(int light, Index y, Index x) {
  const Scalar fx = static_cast<Scalar>(x) / static_cast<Scalar>(kSceneSize - 1);
  const Scalar fy = static_cast<Scalar>(y) / static_cast<Scalar>(kSceneSize - 1);
  switch (light) {
    case 0: return 1.0 - kLightSpan * fx;           // left
    case 1: return 1.0 - kLightSpan + kLightSpan * fx;  // right
    case 2: return 1.0 - kLightSpan * fy;           // top
    default: return 1.0 - kLightSpan + kLightSpan * fy;  // bottom
  }
}

Image render_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng dither(seed);
  Image img(kSceneSize, kSceneSize);
  const auto& tint = tone_tint(spec.tone);
  const auto& obj = color_rgb(spec.color);
  for (Index y = 0; y < kSceneSize; ++y) {
    for (Index x = 0; x < kSceneSize; ++x) {
      const bool on_object = shape_covers(spec.shape, spec.offset_x(), spec.offset_y(), y, x);
      const Scalar lum = kBackgroundBase + kBackgroundPattern * texture_pattern(spec.texture, y, x);
      const Scalar g = light_factor(spec.light, y, x);
      for (Index c = 0; c < 3; ++c) {
        const Scalar base = on_object ? obj[static_cast<std::size_t>(c)] : lum;
        const Scalar v = base * tint[static_cast<std::size_t>(c)] * g + dither.uniform(-kDither, kDither);
        img(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Captions

WordList ConceptAnnotation::positive_prompt() const {
  WordList p = attribute_words;
  p.push_back(concept_word);
  return p;
}

const ConceptAnnotation& Caption::concept_for(Category c) const {
  for (const auto& a : concepts) {
    if (a.category == c) return a;
  }
  throw RangeError("caption has no concept of category " + std::string(category_name(c)));
}

Caption caption(const SceneSpec& spec, std::span<const Category> omit) {
  spec.validate();
  auto omitted = [&](Category c) { return std::find(omit.begin(), omit.end(), c) != omit.end(); };
  Caption out;
  auto push = [&](std::string_view w) { out.words.emplace_back(w); };
  auto annotate = [&](Category c, std::string_view concept_word, std::string_view attribute) {
    out.concepts.push_back({c, std::string(concept_word), out.words.size() - 1, WordList{std::string(attribute)}});
  };

  push("a");
  if (!omitted(Category::shape)) push(kColors[static_cast<std::size_t>(spec.color)]);
  push(kShapes[static_cast<std::size_t>(spec.shape)]);
  annotate(Category::shape, kShapes[static_cast<std::size_t>(spec.shape)], kColors[static_cast<std::size_t>(spec.color)]);
  push("on");
  if (!omitted(Category::texture)) push(kTextures[static_cast<std::size_t>(spec.texture)]);
  push("texture");
  annotate(Category::texture, "texture", kTextures[static_cast<std::size_t>(spec.texture)]);
  push("with");
  if (!omitted(Category::tone)) push(kTones[static_cast<std::size_t>(spec.tone)]);
  push("tone");
  annotate(Category::tone, "tone", kTones[static_cast<std::size_t>(spec.tone)]);
  push("and");
  if (!omitted(Category::light)) push(kLights[static_cast<std::size_t>(spec.light)]);
  push("light");
  annotate(Category::light, "light", kLights[static_cast<std::size_t>(spec.light)]);
  return out;
}

std::optional<Category> concept_category(std::string_view concept_word) {
  for (auto s : kShapes) {
    if (s == concept_word) return Category::shape;
  }
  for (Category c : {Category::texture, Category::tone, Category::light}) {
    if (category_word(c) == concept_word) return c;
  }
  return std::nullopt;
}

WordList attribute_caption(const SceneSpec& spec, std::string_view concept_word) {
  auto cat = concept_category(concept_word);
  if (!cat || (*cat == Category::shape && kShapes[static_cast<std::size_t>(spec.shape)] != concept_word)) {
    throw RangeError("concept word '" + std::string(concept_word) + "' does not occur in this scene");
  }
  return caption(spec).concept_for(*cat).positive_prompt();
}

}  // namespace modadapter
