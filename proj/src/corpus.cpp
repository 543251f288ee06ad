// SPDX-License-Identifier: Apache-2.0
#include "vcwe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "vcwe/error.hpp"
#include "vcwe/utf8.hpp"

namespace vcwe {

namespace {

bool is_space(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\r' || cp == U'\v' || cp == U'\f' || cp == 0x3000;
}

}  // namespace

Sentences normalize_text(std::string_view raw) {
  const std::u32string text = utf8::decode(raw);
  Sentences sentences;
  if (text.empty()) return sentences;

  std::vector<std::string> line;
  std::u32string token;
  auto flush_token = [&] {
    if (!token.empty()) line.push_back(utf8::encode(token));
    token.clear();
  };
  for (char32_t cp : text) {
    if (cp == U'\n') {
      flush_token();
      sentences.push_back(std::move(line));
      line.clear();
    } else if (is_space(cp)) {
      flush_token();
    } else if (is_kept_codepoint(cp)) {
      token.push_back(cp);
    }
  }
  flush_token();
  // A trailing newline terminates the last line rather than opening a new one.
  if (text.back() != U'\n') sentences.push_back(std::move(line));
  return sentences;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary Vocabulary::from_records(std::vector<std::string> words, std::vector<std::uint64_t> counts) {
  if (words.size() != counts.size()) throw FormatError("vocabulary words/counts length mismatch");
  Vocabulary v;
  v.words_ = std::move(words);
  v.counts_ = std::move(counts);
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    if (!v.ids_.emplace(v.words_[i], static_cast<WordId>(i)).second)
      throw FormatError("duplicate vocabulary word '" + v.words_[i] + "'");
    v.total_ += v.counts_[i];
  }
  return v;
}

bool Vocabulary::contains(std::string_view word) const { return ids_.contains(std::string(word)); }

WordId Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end()) throw LookupError("word not in vocabulary: '" + std::string(word) + "'");
  return it->second;
}

WordId Vocabulary::find(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? static_cast<WordId>(words_.size()) : it->second;
}

double Vocabulary::frequency(WordId id) const {
  return static_cast<double>(counts_.at(id)) / static_cast<double>(total_);
}

std::vector<char32_t> Vocabulary::charset() const {
  std::set<char32_t> chars;
  for (const auto& w : words_)
    for (char32_t cp : utf8::decode(w)) chars.insert(cp);
  return {chars.begin(), chars.end()};
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << counts_[i] << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open vocabulary file " + path.string());
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected word<TAB>count");
    const std::string count_text = line.substr(tab + 1);
    std::size_t used = 0;
    std::uint64_t count = 0;
    try {
      count = std::stoull(count_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != count_text.size())
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad count '" + count_text + "'");
    words.push_back(line.substr(0, tab));
    counts.push_back(count);
  }
  return from_records(std::move(words), std::move(counts));
}

Vocabulary build_vocabulary(const Sentences& sentences, std::uint64_t min_count) {
  if (min_count < 1) throw DomainError("min_count must be >= 1");
  struct Entry {
    std::uint64_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> table;
  std::vector<std::string> order;
  for (const auto& sentence : sentences) {
    for (const auto& token : sentence) {
      auto [it, inserted] = table.try_emplace(token);
      if (inserted) {
        it->second.first = order.size();
        order.push_back(token);
      }
      ++it->second.count;
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (table[order[i]].count >= min_count) kept.push_back(i);
  if (kept.empty())
    throw EmptyVocabularyError("empty vocabulary: no word occurs at least " + std::to_string(min_count) +
                               " times");
  std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    return table[order[a]].count > table[order[b]].count;
  });
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  for (std::size_t i : kept) {
    words.push_back(order[i]);
    counts.push_back(table[order[i]].count);
  }
  return Vocabulary::from_records(std::move(words), std::move(counts));
}

// --------------------------------------------------------------- TokenStream

std::size_t TokenStream::token_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

void TokenStream::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out << ' ';
      out << s[i];
    }
    out << '\n';
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

TokenStream TokenStream::load(const std::filesystem::path& path, std::size_t vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open token stream " + path.string());
  TokenStream stream;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::vector<WordId> sentence;
    std::string field;
    while (fields >> field) {
      std::size_t used = 0;
      unsigned long long id = 0;
      try {
        id = std::stoull(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size() || used == 0 || id >= vocab_size)
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad word id '" + field + "'");
      sentence.push_back(static_cast<WordId>(id));
    }
    stream.sentences.push_back(std::move(sentence));
  }
  return stream;
}

TokenStream encode(const Sentences& sentences, const Vocabulary& vocab) {
  TokenStream stream;
  stream.sentences.reserve(sentences.size());
  for (const auto& sentence : sentences) {
    std::vector<WordId> ids;
    for (const auto& token : sentence) {
      const WordId id = vocab.find(token);
      if (id < vocab.size()) ids.push_back(id);
    }
    stream.sentences.push_back(std::move(ids));
  }
  return stream;
}

// -------------------------------------------------------------- subsampling

double subsample_keep_prob(double freq, double threshold) {
  if (!(freq > 0.0)) throw DomainError("subsample frequency must be positive");
  if (!(threshold > 0.0)) throw DomainError("subsample threshold must be positive");
  return std::clamp(std::sqrt(threshold / freq), 0.0, 1.0);
}

// ------------------------------------------------------------- SamplerTable

SamplerTable SamplerTable::from_weights(const std::vector<double>& weights, double power) {
  if (weights.empty()) throw DomainError("sampler table needs at least one entry");
  if (!(power > 0.0)) throw DomainError("sampler power must be positive");
  SamplerTable table;
  table.power_ = power;
  table.cumulative_.resize(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
      throw DomainError("sampler weights must be finite and non-negative");
    total += weights[i] == 0.0 ? 0.0 : std::pow(weights[i], power);
    table.cumulative_[i] = total;
  }
  if (!(total > 0.0)) throw DomainError("sampler weights sum to zero");
  for (double& c : table.cumulative_) c /= total;
  table.cumulative_.back() = 1.0;
  return table;
}

double SamplerTable::probability(WordId id) const {
  const double hi = cumulative_.at(id);
  return id == 0 ? hi : hi - cumulative_[id - 1];
}

WordId SamplerTable::lookup(double u) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<WordId>(it - cumulative_.begin());
}

SamplerTable build_negative_table(const Vocabulary& vocab, double power) {
  if (vocab.empty()) throw EmptyVocabularyError("negative table needs a non-empty vocabulary");
  std::vector<double> weights(vocab.counts().begin(), vocab.counts().end());
  return SamplerTable::from_weights(weights, power);
}

std::vector<WordId> sample_negatives(const SamplerTable& table, std::size_t k, Rng& rng) {
  if (k < 1) throw DomainError("negative count must be >= 1");
  std::vector<WordId> out(k);
  for (auto& id : out) id = table.lookup(rng.uniform());
  return out;
}

// -------------------------------------------------------------------- pairs

std::vector<std::vector<bool>> subsample_mask(const TokenStream& stream, const Vocabulary& vocab,
                                              double threshold, Rng& rng) {
  std::vector<std::vector<bool>> mask;
  mask.reserve(stream.sentences.size());
  std::vector<double> keep;
  if (threshold > 0.0) {
    keep.resize(vocab.size());
    for (WordId id = 0; id < vocab.size(); ++id)
      keep[id] = vocab.count(id) == 0 ? 1.0 : subsample_keep_prob(vocab.frequency(id), threshold);
  }
  for (const auto& sentence : stream.sentences) {
    std::vector<bool> row(sentence.size(), true);
    if (!keep.empty()) {
      for (std::size_t i = 0; i < sentence.size(); ++i) {
        const double p = keep.at(sentence[i]);
        // Tokens with keep probability 1 consume no randomness.
        row[i] = p >= 1.0 || rng.uniform() < p;
      }
    }
    mask.push_back(std::move(row));
  }
  return mask;
}

std::vector<TrainingPair> pairs_from_mask(const TokenStream& stream,
                                          const std::vector<std::vector<bool>>& mask,
                                          std::size_t window) {
  if (window < 1) throw DomainError("window must be >= 1");
  if (mask.size() != stream.sentences.size()) throw DomainError("mask/sentence count mismatch");
  std::vector<TrainingPair> pairs;
  std::vector<WordId> kept;
  for (std::size_t s = 0; s < stream.sentences.size(); ++s) {
    const auto& sentence = stream.sentences[s];
    kept.clear();
    for (std::size_t i = 0; i < sentence.size(); ++i)
      if (mask[s].at(i)) kept.push_back(sentence[i]);
    const std::size_t n = kept.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= window ? i - window : 0;
      const std::size_t hi = std::min(n - 1, i + window);
      for (std::size_t j = lo; j <= hi; ++j)
        if (j != i) pairs.push_back({kept[i], kept[j]});
    }
  }
  return pairs;
}

std::vector<TrainingPair> generate_pairs(const TokenStream& stream, const Vocabulary& vocab,
                                         std::size_t window, double threshold, Rng& rng) {
  if (window < 1) throw DomainError("window must be >= 1");
  return pairs_from_mask(stream, subsample_mask(stream, vocab, threshold, rng), window);
}

}  // namespace vcwe
