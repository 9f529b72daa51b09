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

#include "modadapter/modk.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "modadapter/errors.hpp"

namespace modadapter {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) u |= static_cast<U>(static_cast<U>(bytes_[pos_ + b]) << (8 * b));
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }

  std::span<const std::uint8_t> take(std::uint64_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw FormatError("MODK: truncated file");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Shape to_shape(const std::vector<std::uint64_t>& e) { return Shape(e.begin(), e.end()); }

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::u8: return 1;
    case DType::i64: return 8;
    case DType::f64: return 8;
  }
  throw FormatError("MODK: unknown dtype");
}

std::uint64_t Section::element_count() const {
  std::uint64_t n = 1;
  for (auto e : extents) n *= e;
  return n;
}

void ModkFile::add(Section s) {
  if (contains(s.name)) throw FormatError("MODK: duplicate section '" + s.name + "'");
  sections_.push_back(std::move(s));
}

void ModkFile::add_f64(std::string name, const Tensor& tensor) {
  Section s{std::move(name), DType::f64, {tensor.shape().begin(), tensor.shape().end()}, {}};
  s.bytes.reserve(tensor.size() * 8);
  for (Scalar v : tensor.data()) put(s.bytes, v);
  add(std::move(s));
}

void ModkFile::add_i64(std::string name, Shape shape, std::span<const std::int64_t> values) {
  if (shape_product(shape) != values.size()) throw ShapeError("MODK: i64 section size mismatch");
  Section s{std::move(name), DType::i64, {shape.begin(), shape.end()}, {}};
  for (auto v : values) put(s.bytes, v);
  add(std::move(s));
}

void ModkFile::add_u8(std::string name, Shape shape, std::span<const std::uint8_t> values) {
  if (shape_product(shape) != values.size()) throw ShapeError("MODK: u8 section size mismatch");
  add(Section{std::move(name), DType::u8, {shape.begin(), shape.end()}, {values.begin(), values.end()}});
}

void ModkFile::add_string(std::string name, std::string_view text) {
  std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  add_u8(std::move(name), {text.size()}, bytes);
}

bool ModkFile::contains(std::string_view name) const {
  return std::any_of(sections_.begin(), sections_.end(), [&](const Section& s) { return s.name == name; });
}

const Section& ModkFile::section(std::string_view name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return s;
  }
  throw FormatError("MODK: missing section '" + std::string(name) + "'");
}

Tensor ModkFile::get_f64(std::string_view name) const {
  const Section& s = section(name);
  if (s.dtype != DType::f64) throw FormatError("MODK: section '" + s.name + "' is not f64");
  Tensor t(to_shape(s.extents));
  Reader r(s.bytes);
  for (Scalar& v : t.data()) v = r.get<Scalar>();
  return t;
}

std::vector<std::int64_t> ModkFile::get_i64(std::string_view name) const {
  const Section& s = section(name);
  if (s.dtype != DType::i64) throw FormatError("MODK: section '" + s.name + "' is not i64");
  std::vector<std::int64_t> out(static_cast<std::size_t>(s.element_count()));
  Reader r(s.bytes);
  for (auto& v : out) v = r.get<std::int64_t>();
  return out;
}

std::vector<std::uint8_t> ModkFile::get_u8(std::string_view name) const {
  const Section& s = section(name);
  if (s.dtype != DType::u8) throw FormatError("MODK: section '" + s.name + "' is not u8");
  return s.bytes;
}

std::string ModkFile::get_string(std::string_view name) const {
  auto b = get_u8(name);
  return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> ModkFile::encode() const {
  std::vector<std::uint8_t> out{'M', 'O', 'D', 'K'};
  put(out, kVersion);
  for (const auto& s : sections_) {
    put(out, static_cast<std::uint32_t>(s.name.size()));
    out.insert(out.end(), s.name.begin(), s.name.end());
    put(out, static_cast<std::uint8_t>(s.dtype));
    put(out, static_cast<std::uint32_t>(s.extents.size()));
    for (auto e : s.extents) put(out, e);
    out.insert(out.end(), s.bytes.begin(), s.bytes.end());
  }
  return out;
}

ModkFile ModkFile::decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), "MODK")) throw FormatError("MODK: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError("MODK: unsupported version " + std::to_string(version));
  ModkFile file;
  while (!r.done()) {
    Section s;
    const auto name_len = r.get<std::uint32_t>();
    auto name = r.take(name_len);
    s.name.assign(name.begin(), name.end());
    const auto tag = r.get<std::uint8_t>();
    if (tag > 2) throw FormatError("MODK: unknown dtype tag " + std::to_string(tag));
    s.dtype = static_cast<DType>(tag);
    const auto rank = r.get<std::uint32_t>();
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      s.extents.push_back(r.get<std::uint64_t>());
      if (s.extents.back() != 0 && count > (std::uint64_t{1} << 40) / s.extents.back())
        throw FormatError("MODK: section '" + s.name + "' too large");
      count *= s.extents.back();
    }
    auto payload = r.take(count * dtype_size(s.dtype));
    s.bytes.assign(payload.begin(), payload.end());
    file.add(std::move(s));
  }
  return file;
}

void ModkFile::write(const std::filesystem::path& path) const { write_file_atomic(path, encode()); }

ModkFile ModkFile::read(const std::filesystem::path& path) { return decode(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FormatError("cannot write " + path.string());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace modadapter
