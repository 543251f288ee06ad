// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcwe {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed UTF-8; carries the offset of the first bad byte.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EmptyVocabularyError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// File or text format violation (glyph files, embeddings, datasets, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. centering twice).
class StateError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Quantity is mathematically undefined for the given input (zero vector, constant ranks).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// Too few evaluable word pairs for a correlation.
class InsufficientPairsError : public Error {
 public:
  InsufficientPairsError(const std::string& what, std::size_t evaluated, std::size_t skipped)
      : Error(what), evaluated_(evaluated), skipped_(skipped) {}
  std::size_t evaluated() const noexcept { return evaluated_; }
  std::size_t skipped() const noexcept { return skipped_; }

 private:
  std::size_t evaluated_;
  std::size_t skipped_;
};

/// Vocabulary characters without a glyph image.
class MissingGlyphError : public Error {
 public:
  explicit MissingGlyphError(std::vector<char32_t> missing);
  const std::vector<char32_t>& missing() const noexcept { return missing_; }

 private:
  std::vector<char32_t> missing_;
};

}  // namespace vcwe
