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

#include "modadapter/encoders.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "modadapter/errors.hpp"
#include "modadapter/random.hpp"

namespace modadapter {

namespace {

constexpr std::uint64_t kImageStream = 0x1d;
constexpr std::uint64_t kMappingStream = 0x2e;

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::string& w = words_[i];
    if (w.empty()) throw VocabularyError("empty vocabulary entry at index " + std::to_string(i));
    for (unsigned char c : w) {
      if (std::isspace(c) || std::isupper(c)) {
        throw VocabularyError("vocabulary word '" + w + "' must be lowercase without whitespace");
      }
    }
    if (!lookup_.emplace(w, i).second) throw VocabularyError("duplicate vocabulary word '" + w + "'");
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read vocabulary file " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    WordList parts = split_words(line);
    if (parts.empty()) continue;
    if (parts.size() > 1) throw FormatError("vocabulary line holds more than one word: '" + line + "'");
    words.push_back(parts.front());
  }
  return Vocabulary(std::move(words));
}

Vocabulary Vocabulary::builtin() {
  return Vocabulary({"a",      "on",      "with",   "and",    "red",    "blue",  "yellow",
                     "purple", "circle",  "square", "triangle", "cross", "stripes", "checker",
                     "dots",   "plain",   "warm",   "cool",   "green",  "neutral", "left",
                     "right",  "top",     "bottom", "texture", "tone",  "light",  "surface"});
}

bool Vocabulary::contains(std::string_view word) const { return lookup_.contains(std::string(word)); }

std::size_t Vocabulary::index(std::string_view word) const {
  auto it = lookup_.find(std::string(word));
  if (it == lookup_.end()) throw VocabularyError("word '" + std::string(word) + "' is not in the vocabulary");
  return it->second;
}

WordList split_words(std::string_view text) {
  WordList out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Encoders

RowVector TextEncoder::hashed_vector(std::string_view word, Index dim, std::uint64_t seed, Scalar stddev) {
  Rng rng(derive_seed(seed, fnv1a64(word)));
  RowVector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = stddev * rng.normal();
  return v;
}

TextEncoder::TextEncoder(const Vocabulary& vocab, Index dim, std::uint64_t seed)
    : vocab_(&vocab), dim_(dim), stddev_(1.0 / std::sqrt(static_cast<Scalar>(dim))) {
  if (dim <= 0) throw RangeError("text embedding width must be positive");
  table_.resize(static_cast<Index>(vocab.size()), dim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    table_.row(static_cast<Index>(i)) = hashed_vector(vocab.word(i), dim, seed, stddev_);
  }
}

RowVector TextEncoder::encode_word(std::string_view word) const {
  return table_.row(static_cast<Index>(vocab_->index(word)));
}

RowVector TextEncoder::encode_prompt_pooled(std::span<const std::string> prompt) const {
  RowVector out = RowVector::Zero(dim_);
  for (const auto& w : prompt) out += table_.row(static_cast<Index>(vocab_->index(w)));
  return out;
}

Matrix TextEncoder::encode_tokens(std::span<const std::string> prompt) const {
  Matrix out(static_cast<Index>(prompt.size()), dim_);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    out.row(static_cast<Index>(i)) = table_.row(static_cast<Index>(vocab_->index(prompt[i])));
  }
  return out;
}

ImageEncoder::ImageEncoder(Index patch, Index dim, std::uint64_t seed) : patch_(patch) {
  if (patch <= 0 || dim <= 0) throw RangeError("image encoder patch size and width must be positive");
  const Index in = patch * patch * 3;
  Rng rng(derive_seed(seed, kImageStream));
  projection_ = Tensor::from_matrix(rng.normal_matrix(in, dim, 1.0 / std::sqrt(static_cast<Scalar>(in))));
}

Matrix ImageEncoder::encode_image_patches(const Image& image) const {
  return patchify(image, patch_) * projection_.value();
}

MappingLayer::MappingLayer(Index in_dim, Index out_dim, std::uint64_t seed) {
  if (in_dim <= 0 || out_dim <= 0) throw RangeError("mapping layer extents must be positive");
  Rng rng(derive_seed(seed, kMappingStream));
  weight_ = Tensor::from_matrix(rng.normal_matrix(in_dim, out_dim, 1.0 / std::sqrt(static_cast<Scalar>(in_dim))));
}

RowVector MappingLayer::map_to_modspace(const RowVector& v) const {
  if (v.size() != in_dim()) {
    throw ShapeError("map_to_modspace: expected width " + std::to_string(in_dim()) + ", got " +
                     std::to_string(v.size()));
  }
  return v * weight_.value();
}

Matrix MappingLayer::map_rows(const Matrix& rows) const {
  if (rows.cols() != in_dim()) throw ShapeError("map_rows: width mismatch");
  return rows * weight_.value();
}

ToyEncoders::ToyEncoders(Vocabulary vocab, const EncoderConfig& config)
    : config_(config),
      vocab_(std::move(vocab)),
      text_(vocab_, config.text_dim, config.seed),
      image_(config.patch, config.image_dim, config.seed),
      mapping_(config.text_dim, config.mod_dim, config.seed) {}

RowVector ToyEncoders::map_prompt(std::span<const std::string> prompt) const {
  return mapping_.map_to_modspace(text_.encode_prompt_pooled(prompt));
}

RowVector ToyEncoders::neutral_feature(std::string_view concept_word) const {
  const std::string w(concept_word);
  return map_prompt(std::span<const std::string>(&w, 1));
}

std::uint64_t ToyEncoders::hash() const {
  const Tensor* parts[] = {&image_.projection(), &mapping_.weight()};
  return content_hash(parts);
}

}  // namespace modadapter
