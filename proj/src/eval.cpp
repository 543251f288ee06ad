// SPDX-License-Identifier: Apache-2.0
#include "vcwe/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <utility>

#include "vcwe/error.hpp"

namespace vcwe {

// ----------------------------------------------------------- EmbeddingMatrix

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> words, std::size_t dim, std::vector<double> values)
    : words_(std::move(words)), dim_(dim), values_(std::move(values)) {
  if (values_.size() != words_.size() * dim_)
    throw FormatError("embedding matrix holds " + std::to_string(values_.size()) + " values for " +
                      std::to_string(words_.size()) + " words of dimension " + std::to_string(dim_));
  for (double v : values_)
    if (std::isnan(v)) throw FormatError("embedding matrix contains NaN");
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (!index_.emplace(words_[i], i).second) throw FormatError("duplicate embedding word '" + words_[i] + "'");
}

std::span<const double> EmbeddingMatrix::row(std::size_t i) const {
  if (i >= words_.size()) throw LookupError("embedding row " + std::to_string(i) + " out of range");
  return std::span<const double>(values_).subspan(i * dim_, dim_);
}

std::size_t EmbeddingMatrix::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? words_.size() : it->second;
}

void save_embeddings(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << emb.size() << ' ' << emb.dim() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < emb.size(); ++i) {
    out << emb.words()[i];
    for (double v : emb.row(i)) {
      std::snprintf(buf, sizeof buf, " %.9g", v);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

EmbeddingMatrix parse_embeddings(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  while (!lines.empty() && split_fields(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("embedding file is empty");

  const auto header = split_fields(lines[0]);
  std::size_t rows = 0, dim = 0;
  if (header.size() != 2 || !parse_number(header[0], rows) || !parse_number(header[1], dim))
    throw FormatError("embedding header must be '<vocab_size> <dim>'");
  if (lines.size() - 1 != rows)
    throw FormatError("embedding header declares " + std::to_string(rows) + " rows but file has " +
                      std::to_string(lines.size() - 1));

  std::vector<std::string> words;
  std::vector<double> values;
  words.reserve(rows);
  values.reserve(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto fields = split_fields(lines[r + 1]);
    if (fields.size() != dim + 1)
      throw FormatError("embedding line " + std::to_string(r + 2) + " has " +
                        std::to_string(fields.empty() ? 0 : fields.size() - 1) + " values, expected " +
                        std::to_string(dim));
    words.emplace_back(fields[0]);
    for (std::size_t j = 1; j <= dim; ++j) {
      double v;
      if (!parse_number(fields[j], v))
        throw FormatError("embedding line " + std::to_string(r + 2) + ": non-numeric field '" +
                          std::string(fields[j]) + "'");
      values.push_back(v);
    }
  }
  return EmbeddingMatrix(std::move(words), dim, std::move(values));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open embedding file " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_embeddings(text);
}

// ----------------------------------------------------------------- metrics

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DomainError("cosine: dimension mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw UndefinedError("cosine similarity is undefined for a zero vector");
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spearman: length mismatch");
  if (x.size() < 2) throw DomainError("spearman needs at least two observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedError("spearman correlation is undefined for a constant ranking");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// --------------------------------------------------------------- datasets

SimilarityDataset parse_similarity_dataset(std::string_view text, std::string name) {
  SimilarityDataset ds;
  ds.name = std::move(name);
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos)
      throw FormatError("dataset line " + std::to_string(lineno) + ": expected word1<TAB>word2<TAB>score");
    SimilarityPair p{std::string(line.substr(0, t1)), std::string(line.substr(t1 + 1, t2 - t1 - 1)), 0.0};
    const std::string_view score = line.substr(t2 + 1);
    if (p.first.empty() || p.second.empty() || !parse_number(score, p.score) || !std::isfinite(p.score))
      throw FormatError("dataset line " + std::to_string(lineno) + ": malformed pair or score");
    auto key = std::minmax(p.first, p.second);
    if (!seen.emplace(key.first, key.second).second)
      throw FormatError("dataset line " + std::to_string(lineno) + ": duplicate pair " + p.first + "/" + p.second);
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

SimilarityDataset load_similarity_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_similarity_dataset(text, path.stem().string());
}

SimilarityReport evaluate_similarity(const EmbeddingMatrix& emb, const SimilarityDataset& dataset) {
  std::vector<double> model_scores, human_scores;
  std::size_t skipped = 0;
  for (const auto& p : dataset.pairs) {
    const std::size_t a = emb.find(p.first), b = emb.find(p.second);
    if (a >= emb.size() || b >= emb.size()) {
      ++skipped;
      continue;
    }
    model_scores.push_back(cosine(emb.row(a), emb.row(b)));
    human_scores.push_back(p.score);
  }
  if (model_scores.size() < 2)
    throw InsufficientPairsError("only " + std::to_string(model_scores.size()) + " evaluable pair(s), " +
                                     std::to_string(skipped) + " skipped as out-of-vocabulary",
                                 model_scores.size(), skipped);
  return {spearman(model_scores, human_scores), model_scores.size(), skipped};
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingMatrix& emb, std::string_view word, std::size_t k) {
  const std::size_t q = emb.find(word);
  if (q >= emb.size()) throw LookupError("query word not in vocabulary: '" + std::string(word) + "'");
  if (k >= emb.size())
    throw DomainError("k = " + std::to_string(k) + " must be smaller than the vocabulary size " +
                      std::to_string(emb.size()));
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(emb.size() - 1);
  for (std::size_t i = 0; i < emb.size(); ++i)
    if (i != q) scored.emplace_back(cosine(emb.row(q), emb.row(i)), i);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({emb.words()[scored[i].second], scored[i].first});
  return out;
}

}  // namespace vcwe
