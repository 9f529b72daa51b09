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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modadapter/tensor.hpp"

namespace modadapter {

/// Element type tag of a MODK section.
enum class DType : std::uint8_t { u8 = 0, i64 = 1, f64 = 2 };

std::size_t dtype_size(DType t);

/// One named array. `bytes` holds the little-endian payload.
struct Section {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> extents;
  std::vector<std::uint8_t> bytes;

  std::uint64_t element_count() const;
  bool operator==(const Section&) const = default;
};

/// In-memory MODK container: the magic "MODK", a u32 format version, then
/// sections until end of file. Each section is
///   u32 name length, name bytes, u8 dtype, u32 rank, rank x u64 extents,
///   payload.
/// All integers and floats are little-endian regardless of host.
class ModkFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void add_f64(std::string name, const Tensor& tensor);
  void add_i64(std::string name, Shape shape, std::span<const std::int64_t> values);
  void add_u8(std::string name, Shape shape, std::span<const std::uint8_t> values);
  void add_string(std::string name, std::string_view text);

  bool contains(std::string_view name) const;
  const Section& section(std::string_view name) const;
  const std::vector<Section>& sections() const { return sections_; }

  Tensor get_f64(std::string_view name) const;
  std::vector<std::int64_t> get_i64(std::string_view name) const;
  std::vector<std::uint8_t> get_u8(std::string_view name) const;
  std::string get_string(std::string_view name) const;

  std::vector<std::uint8_t> encode() const;
  static ModkFile decode(std::span<const std::uint8_t> bytes);

  /// Writes to a sibling temporary file and renames it into place.
  void write(const std::filesystem::path& path) const;
  static ModkFile read(const std::filesystem::path& path);

  bool operator==(const ModkFile&) const = default;

 private:
  void add(Section s);
  std::vector<Section> sections_;
};

/// Shared helpers for atomic whole-file writes.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace modadapter
