// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vcwe {

/// Word vectors in vocabulary order, row-major [V, D].
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Throws FormatError on a row/word count mismatch, duplicate words or NaN.
  EmbeddingMatrix(std::vector<std::string> words, std::size_t dim, std::vector<double> values);

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::span<const double> row(std::size_t i) const;
  /// size() when absent.
  std::size_t find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word) < size(); }

 private:
  std::vector<std::string> words_;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text format: "<V> <D>" then one "word v_1 ... v_D" line per row.
void save_embeddings(const EmbeddingMatrix& emb, const std::filesystem::path& path);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
EmbeddingMatrix parse_embeddings(std::string_view text);

/// Throws UndefinedError when either vector has zero norm.
double cosine(std::span<const double> u, std::span<const double> v);

/// Fractional (average) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of average ranks. Throws DomainError for n < 2 or
/// length mismatch and UndefinedError when either ranking is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct SimilarityPair {
  std::string first;
  std::string second;
  double score;
};

struct SimilarityDataset {
  std::string name;
  std::vector<SimilarityPair> pairs;
};

/// "word1<TAB>word2<TAB>score" per line. Throws FormatError on malformed
/// lines, non-finite scores or a repeated unordered pair.
SimilarityDataset load_similarity_dataset(const std::filesystem::path& path);
SimilarityDataset parse_similarity_dataset(std::string_view text, std::string name = "");

struct SimilarityReport {
  double rho;
  std::size_t evaluated;
  std::size_t skipped;
};

/// Pairs with an out-of-vocabulary word are skipped and counted. Throws
/// InsufficientPairsError when fewer than two pairs remain.
SimilarityReport evaluate_similarity(const EmbeddingMatrix& emb, const SimilarityDataset& dataset);

struct Neighbor {
  std::string word;
  double similarity;
};

/// k most cosine-similar words to `word`, excluding itself; ties by row
/// order. Throws LookupError for unknown words and DomainError unless k < V.
std::vector<Neighbor> nearest_neighbors(const EmbeddingMatrix& emb, std::string_view word, std::size_t k);

}  // namespace vcwe
