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

#include <filesystem>

#include "modadapter/image.hpp"

namespace modadapter {

/// Binary P6, maxval 255. Values are clamped to [0, 1] and rounded.
void write_ppm(const std::filesystem::path& path, const Image& image);
/// Reads P6 with maxval <= 255 (comments allowed in the header).
Image read_ppm(const std::filesystem::path& path);

}  // namespace modadapter
