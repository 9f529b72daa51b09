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

#include <string>
#include <string_view>

#include "modadapter/image.hpp"
#include "modadapter/scene.hpp"

namespace modadapter {

/// Analytic attribute readers for synthetic scenes.
///
/// tone:    nearest tint to the per-channel median ratios;
/// shape:   best IoU of the saturated-pixel mask against every shape template
///          at every placement;
/// light:   sign of the least-squares log-brightness gradient over background
///          pixels;
/// texture: normalized correlation of the de-trended background against the
///          pattern templates, "plain" when none exceeds the threshold.
/// Ties resolve to enumeration order.
int probe_value(const Image& image, Category category);
std::string probe_attribute(const Image& image, Category category);
/// Category given by name; unknown names raise RangeError.
std::string probe_attribute(const Image& image, std::string_view category);

/// Correlation above which a texture pattern beats "plain".
inline constexpr Scalar kPlainTextureThreshold = 0.5;

}  // namespace modadapter
