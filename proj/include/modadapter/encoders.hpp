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
#include <unordered_map>
#include <vector>

#include "modadapter/image.hpp"
#include "modadapter/tensor.hpp"

namespace modadapter {

using WordList = std::vector<std::string>;

/// Ordered, duplicate-free set of lowercase words.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  /// One word per line; blank lines are skipped.
  static Vocabulary load(const std::filesystem::path& path);
  /// The vocabulary the synthetic scenes are written in (same content as
  /// data/vocab.txt).
  static Vocabulary builtin();

  std::size_t size() const { return words_.size(); }
  bool contains(std::string_view word) const;
  /// Throws VocabularyError for unknown words.
  std::size_t index(std::string_view word) const;
  const std::string& word(std::size_t i) const { return words_.at(i); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

/// Splits on ASCII whitespace.
WordList split_words(std::string_view text);
std::string join_words(std::span<const std::string> words);

/// Stable 64-bit FNV-1a of the UTF-8 bytes.
std::uint64_t fnv1a64(std::string_view bytes);

struct EncoderConfig {
  Index text_dim = 64;
  Index image_dim = 48;
  Index mod_dim = 32;
  Index patch = 4;
  std::uint64_t seed = 1234;
};

/// Frozen word-level text encoder; each word's vector is drawn from a
/// generator seeded by its hash mixed with the global seed.
class TextEncoder {
 public:
  TextEncoder(const Vocabulary& vocab, Index dim, std::uint64_t seed);

  Index dim() const { return dim_; }
  Scalar stddev() const { return stddev_; }
  RowVector encode_word(std::string_view word) const;
  /// Unnormalized sum of word vectors; the empty prompt maps to zero.
  RowVector encode_prompt_pooled(std::span<const std::string> prompt) const;
  /// Per-word vectors, one row per word.
  Matrix encode_tokens(std::span<const std::string> prompt) const;

  /// Vector for an arbitrary string, without the vocabulary check.
  static RowVector hashed_vector(std::string_view word, Index dim, std::uint64_t seed, Scalar stddev);

 private:
  const Vocabulary* vocab_;
  Index dim_;
  Scalar stddev_;
  Matrix table_;
};

/// Frozen bias-free linear patch projection.
class ImageEncoder {
 public:
  ImageEncoder(Index patch, Index dim, std::uint64_t seed);

  Index patch() const { return patch_; }
  Index dim() const { return projection_.value().cols(); }
  /// One row per patch.
  Matrix encode_image_patches(const Image& image) const;
  const Tensor& projection() const { return projection_; }

 private:
  Index patch_;
  Tensor projection_;
};

/// Frozen bias-free linear map from text space into modulation space.
class MappingLayer {
 public:
  MappingLayer(Index in_dim, Index out_dim, std::uint64_t seed);

  Index in_dim() const { return weight_.value().rows(); }
  Index out_dim() const { return weight_.value().cols(); }
  RowVector map_to_modspace(const RowVector& v) const;
  Matrix map_rows(const Matrix& rows) const;
  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_;
};

/// The frozen stand-ins bundled: vocabulary, text and image encoders, M.
class ToyEncoders {
 public:
  explicit ToyEncoders(Vocabulary vocab, const EncoderConfig& config = {});
  ToyEncoders(const ToyEncoders&) = delete;
  ToyEncoders& operator=(const ToyEncoders&) = delete;

  const EncoderConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const TextEncoder& text() const { return text_; }
  const ImageEncoder& image() const { return image_; }
  const MappingLayer& mapping() const { return mapping_; }

  /// M(text(prompt)).
  RowVector map_prompt(std::span<const std::string> prompt) const;
  /// M(text([concept_word])), the modulation-space embedding of p0.
  RowVector neutral_feature(std::string_view concept_word) const;

  /// Hash of every frozen buffer (image projection and M).
  std::uint64_t hash() const;

 private:
  EncoderConfig config_;
  Vocabulary vocab_;
  TextEncoder text_;
  ImageEncoder image_;
  MappingLayer mapping_;
};

}  // namespace modadapter
