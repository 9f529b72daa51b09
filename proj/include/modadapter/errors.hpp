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

#include <stdexcept>
#include <string>

namespace modadapter {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a value or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An index or scalar argument is outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A word is not part of the vocabulary.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file (MODK container, PPM, vocabulary).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration key, line or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong training stage.
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace modadapter
