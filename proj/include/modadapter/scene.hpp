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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modadapter/encoders.hpp"
#include "modadapter/image.hpp"

namespace modadapter {

/// Concept categories of a synthetic scene. The object category's concept
/// word is the shape word itself; the other three use a fixed category word.
enum class Category : int { shape = 0, texture = 1, tone = 2, light = 3 };

inline constexpr std::array<Category, 4> kCategories{Category::shape, Category::texture, Category::tone,
                                                     Category::light};

inline constexpr std::array<std::string_view, 4> kShapes{"circle", "square", "triangle", "cross"};
inline constexpr std::array<std::string_view, 4> kColors{"red", "blue", "yellow", "purple"};
inline constexpr std::array<std::string_view, 4> kTextures{"stripes", "checker", "dots", "plain"};
inline constexpr std::array<std::string_view, 4> kTones{"warm", "cool", "green", "neutral"};
inline constexpr std::array<std::string_view, 4> kLights{"left", "right", "top", "bottom"};

/// Object centre jitter: offsets in [-1, 1] along both axes.
inline constexpr int kPlacementRadius = 1;
inline constexpr int kPlacementCount = (2 * kPlacementRadius + 1) * (2 * kPlacementRadius + 1);

inline constexpr Index kSceneSize = 16;

std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view name);
/// Enumeration of the value probed for a category (shapes, textures, tones,
/// lights).
const std::array<std::string_view, 4>& category_values(Category c);
/// The caption word that marks the category (texture, tone, light); for the
/// shape category there is no fixed word.
std::string_view category_word(Category c);

struct SceneSpec {
  int shape = 0;
  int color = 0;
  int texture = 0;
  int tone = 0;
  int light = 0;
  /// Index into the kPlacementCount object positions.
  int placement = kPlacementCount / 2;

  int value(Category c) const;
  int& value(Category c);
  void validate() const;
  /// Object centre offset from the image centre.
  int offset_x() const { return placement % (2 * kPlacementRadius + 1) - kPlacementRadius; }
  int offset_y() const { return placement / (2 * kPlacementRadius + 1) - kPlacementRadius; }

  bool operator==(const SceneSpec&) const = default;
};

/// Uniform draw over every enumeration and placement.
SceneSpec random_spec(std::uint64_t seed);

/// Attribute combinations withheld from training: color/light pairs with
/// (color + light) % 4 == 0.
bool is_heldout_combo(const SceneSpec& spec);

// ---------------------------------------------------------------------------
// Rendering

/// Background pattern in {0, 1} of a texture at pixel (y, x).
int texture_pattern(int texture, Index y, Index x);
/// True where the object of `shape` centred at the given offset covers (y, x).
bool shape_covers(int shape, int offset_x, int offset_y, Index y, Index x);
/// Per-channel tint multiplier of a tone.
const std::array<Scalar, 3>& tone_tint(int tone);
const std::array<Scalar, 3>& color_rgb(int color);
/// Brightness multiplier of a light direction at (y, x).
Scalar light_factor(int light, Index y, Index x);

/// Deterministic raster of a scene. `seed` drives a small dither that keeps
/// renders of identical specs distinct.
Image render_scene(const SceneSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Captions

/// (concept word, index of that word in the caption, attribute words).
struct ConceptAnnotation {
  Category category = Category::shape;
  std::string concept_word;
  std::size_t token_index = 0;
  WordList attribute_words;

  /// p+ = attribute words followed by the concept word.
  WordList positive_prompt() const;
};

struct Caption {
  WordList words;
  std::vector<ConceptAnnotation> concepts;

  const ConceptAnnotation& concept_for(Category c) const;
};

/// "a <color> <shape> on <texture> texture with <tone> tone and <light> light".
/// Categories listed in `omit` lose their attribute word (the shape category
/// loses its color word) while keeping the concept word.
Caption caption(const SceneSpec& spec, std::span<const Category> omit = {});

/// p+ for one concept word of the scene, e.g. tone -> {"warm", "tone"}.
WordList attribute_caption(const SceneSpec& spec, std::string_view concept_word);

/// Category whose concept word this is, if any (shape words map to shape).
std::optional<Category> concept_category(std::string_view concept_word);

}  // namespace modadapter
