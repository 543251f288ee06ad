// SPDX-License-Identifier: Apache-2.0
//
// Corpus pipeline: text normalization, vocabulary, subsampling,
// skip-gram pair extraction and the negative-sampling table.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vcwe/rng.hpp"

namespace vcwe {

using WordId = std::uint32_t;

/// Inclusive codepoint range of the CJK characters kept by normalization.
inline constexpr char32_t kCjkFirst = 0x4E00;
inline constexpr char32_t kCjkLast = 0x9FA5;

constexpr bool is_kept_codepoint(char32_t cp) noexcept { return cp >= kCjkFirst && cp <= kCjkLast; }

/// One entry per input line; each line is a list of UTF-8 tokens.
using Sentences = std::vector<std::vector<std::string>>;

/// Splits on whitespace, strips every character outside the CJK range from
/// each token and drops tokens left empty. Line structure is preserved, so a
/// line with no surviving token yields an empty sentence.
Sentences normalize_text(std::string_view raw);

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Builds from explicit (word, count) records already in id order.
  static Vocabulary from_records(std::vector<std::string> words, std::vector<std::uint64_t> counts);

  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }

  const std::string& word(WordId id) const { return words_.at(id); }
  std::uint64_t count(WordId id) const { return counts_.at(id); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
  std::uint64_t total_tokens() const noexcept { return total_; }

  bool contains(std::string_view word) const;
  /// Throws LookupError for unknown words.
  WordId id(std::string_view word) const;
  /// Returns size() for unknown words.
  WordId find(std::string_view word) const;

  /// Relative frequency f(w) = count / total_tokens.
  double frequency(WordId id) const;

  /// Sorted unique codepoints of every word.
  std::vector<char32_t> charset() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.counts_ == b.counts_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, WordId> ids_;
  std::uint64_t total_ = 0;
};

/// Keeps words with count >= min_count; ids by descending count, ties by
/// first occurrence. Throws EmptyVocabularyError when nothing survives.
Vocabulary build_vocabulary(const Sentences& sentences, std::uint64_t min_count);

/// Sentences of word ids; out-of-vocabulary tokens are dropped.
struct TokenStream {
  std::vector<std::vector<WordId>> sentences;

  std::size_t token_count() const noexcept;
  void save(const std::filesystem::path& path) const;
  /// Validates every id against vocab_size.
  static TokenStream load(const std::filesystem::path& path, std::size_t vocab_size);
};

TokenStream encode(const Sentences& sentences, const Vocabulary& vocab);

/// Keep probability sqrt(t / f) clamped to [0, 1].
double subsample_keep_prob(double freq, double threshold);

class SamplerTable {
 public:
  /// Cumulative table over arbitrary non-negative weights (need not be normalized).
  static SamplerTable from_weights(const std::vector<double>& weights, double power = 1.0);

  std::size_t size() const noexcept { return cumulative_.size(); }
  double power() const noexcept { return power_; }
  const std::vector<double>& cumulative() const noexcept { return cumulative_; }
  double probability(WordId id) const;

  /// Inverse-CDF lookup for u in [0, 1).
  WordId lookup(double u) const;

 private:
  std::vector<double> cumulative_;
  double power_ = 1.0;
};

/// P(w) proportional to count(w)^power.
SamplerTable build_negative_table(const Vocabulary& vocab, double power = 0.75);

std::vector<WordId> sample_negatives(const SamplerTable& table, std::size_t k, Rng& rng);

struct TrainingPair {
  WordId target;
  WordId context;
  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
  friend auto operator<=>(const TrainingPair&, const TrainingPair&) = default;
};

/// Per-token keep decisions, one vector per sentence. A threshold <= 0
/// disables subsampling (everything kept, no randomness consumed).
std::vector<std::vector<bool>> subsample_mask(const TokenStream& stream, const Vocabulary& vocab,
                                              double threshold, Rng& rng);

/// Emits (target, context) for every pair of kept tokens within `window`
/// positions of each other in the compacted (kept-only) sentence.
std::vector<TrainingPair> pairs_from_mask(const TokenStream& stream,
                                          const std::vector<std::vector<bool>>& mask,
                                          std::size_t window);

/// subsample_mask followed by pairs_from_mask.
std::vector<TrainingPair> generate_pairs(const TokenStream& stream, const Vocabulary& vocab,
                                         std::size_t window, double threshold, Rng& rng);

}  // namespace vcwe
