// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "toy.hpp"
#include "vcwe/error.hpp"
#include "vcwe/eval.hpp"
#include "vcwe/rng.hpp"

using namespace vcwe;

namespace {

// Pearson of ranks, ranks from an O(n^2) count.
double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1) / 2.0;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

EmbeddingMatrix small_embeddings() {
  return EmbeddingMatrix({"甲", "乙", "丙", "丁"}, 2, {1, 0, 0.8, 0.6, 0, 1, -1, 0});
}

}  // namespace

TEST(Cosine, Values) {
  const std::vector<double> a = {1, 2, 3}, b = {2, 4, 6}, c = {-1, -2, -3}, d = {3, 0, -1}, zero = {0, 0, 0};
  EXPECT_NEAR(cosine(a, b), 1.0, 1e-15);
  EXPECT_NEAR(cosine(a, c), -1.0, 1e-15);
  EXPECT_NEAR(cosine(a, d), 0.0, 1e-15);
  EXPECT_THROW(cosine(a, zero), UndefinedError);
  const std::vector<double> short_v = {1};
  EXPECT_THROW(cosine(a, short_v), DomainError);
}

TEST(Cosine, BoundedAndSymmetric) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> u(7), v(7);
    for (double& x : u) x = rng.uniform(-5, 5);
    for (double& x : v) x = rng.uniform(-5, 5);
    const double c = cosine(u, v);
    EXPECT_LE(std::abs(c), 1.0 + 1e-12);
    EXPECT_EQ(c, cosine(v, u));
  }
}

TEST(Spearman, FixedCases) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  EXPECT_NEAR(spearman(x, std::vector<double>{2, 4, 6, 8, 10}), 1.0, 1e-12);
  EXPECT_NEAR(spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_NEAR(spearman(x, std::vector<double>{2, 1, 4, 3, 5}), 0.8, 1e-12);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 1, 4, 3}), 0.6, 1e-12);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{5, 6, 7, 8, 7}), 0.820782681668123, 1e-12);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 0.5, 1e-12);
}

TEST(Spearman, AverageRanks) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  EXPECT_EQ(average_ranks(std::vector<double>{7, 7, 7}), (std::vector<double>{2, 2, 2}));
}

TEST(Spearman, Errors) {
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), DomainError);
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DomainError);
  EXPECT_THROW(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedError);
}

TEST(Spearman, MatchesBruteForceWithTies) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50), y(50);
    for (double& v : x) v = static_cast<double>(rng.below(12));
    for (double& v : y) v = static_cast<double>(rng.below(30)) * 0.5;
    EXPECT_NEAR(spearman(x, y), brute_spearman(x, y), 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneMapsAndSymmetric) {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(20), y(20), fx(20);
    for (double& v : x) v = rng.uniform(-3, 3);
    for (double& v : y) v = rng.uniform(-3, 3);
    std::transform(x.begin(), x.end(), fx.begin(), [](double v) { return std::exp(v) * 4 + 1; });
    const double r = spearman(x, y);
    EXPECT_NEAR(spearman(fx, y), r, 1e-12);
    EXPECT_NEAR(spearman(y, x), r, 1e-12);
    EXPECT_LE(std::abs(r), 1.0 + 1e-12);
    std::vector<double> neg(20);
    std::transform(y.begin(), y.end(), neg.begin(), [](double v) { return -v; });
    EXPECT_NEAR(spearman(x, neg), -r, 1e-12);
  }
}

TEST(SimilarityDataset, Parsing) {
  const auto ds = parse_similarity_dataset("甲\t乙\t3.5\n\n丙\t丁\t1\n", "toy");
  EXPECT_EQ(ds.name, "toy");
  ASSERT_EQ(ds.pairs.size(), 2u);
  EXPECT_EQ(ds.pairs[0].first, "甲");
  EXPECT_EQ(ds.pairs[0].second, "乙");
  EXPECT_EQ(ds.pairs[1].score, 1.0);
  EXPECT_THROW(parse_similarity_dataset("甲\t乙\n"), FormatError);
  EXPECT_THROW(parse_similarity_dataset("甲\t乙\tx\n"), FormatError);
  EXPECT_THROW(parse_similarity_dataset("甲\t乙\tnan\n"), FormatError);
  EXPECT_THROW(parse_similarity_dataset("甲\t乙\t1\n乙\t甲\t2\n"), FormatError);
  EXPECT_THROW(load_similarity_dataset(testkit::scratch_dir("ds") / "absent.txt"), FormatError);
}

TEST(EvaluateSimilarity, PerfectMonotoneDataset) {
  const auto emb = small_embeddings();
  // cos(甲,乙)=0.8, cos(甲,丙)=0, cos(甲,丁)=-1, cos(乙,丙)=0.6
  auto ds = parse_similarity_dataset("甲\t乙\t9\n甲\t丙\t2\n甲\t丁\t0.5\n乙\t丙\t5\n");
  auto r = evaluate_similarity(emb, ds);
  EXPECT_NEAR(r.rho, 1.0, 1e-12);
  EXPECT_EQ(r.evaluated, 4u);
  EXPECT_EQ(r.skipped, 0u);
  for (auto& p : ds.pairs) p.score *= 10;
  EXPECT_NEAR(evaluate_similarity(emb, ds).rho, 1.0, 1e-12);
}

TEST(EvaluateSimilarity, SkipsOovAndRequiresTwoPairs) {
  const auto emb = small_embeddings();
  const auto ds = parse_similarity_dataset("甲\t乙\t9\n甲\t戊\t2\n甲\t丁\t0.5\n");
  const auto r = evaluate_similarity(emb, ds);
  EXPECT_EQ(r.evaluated, 2u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_NEAR(r.rho, 1.0, 1e-12);
  EXPECT_THROW(evaluate_similarity(emb, parse_similarity_dataset("戊\t己\t1\n庚\t辛\t2\n")), InsufficientPairsError);
  EXPECT_THROW(evaluate_similarity(emb, parse_similarity_dataset("甲\t乙\t1\n")), InsufficientPairsError);
}

TEST(EvaluateSimilarity, InvariantUnderEmbeddingScale) {
  Rng rng(40);
  std::vector<std::string> words;
  std::vector<double> values;
  for (int i = 0; i < 10; ++i) {
    words.push_back("w" + std::to_string(i));
    for (int d = 0; d < 5; ++d) values.push_back(rng.uniform(-1, 1));
  }
  std::string text;
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) text += words[i] + "\t" + words[j] + "\t" + std::to_string(rng.uniform()) + "\n";
  const auto ds = parse_similarity_dataset(text);
  const double rho = evaluate_similarity(EmbeddingMatrix(words, 5, values), ds).rho;
  std::vector<double> scaled = values;
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 1.0 + static_cast<double>(i / 5);
  EXPECT_NEAR(evaluate_similarity(EmbeddingMatrix(words, 5, scaled), ds).rho, rho, 1e-12);
}

TEST(Neighbors, DuplicateIsFirstAndSelfExcluded) {
  const EmbeddingMatrix emb({"甲", "乙", "丙", "丁"}, 2, {1, 0, 0, 1, 2, 0, -1, 0.1});
  const auto n = nearest_neighbors(emb, "甲", 3);
  ASSERT_EQ(n.size(), 3u);
  EXPECT_EQ(n[0].word, "丙");
  EXPECT_NEAR(n[0].similarity, 1.0, 1e-15);
  EXPECT_EQ(n[1].word, "乙");
  EXPECT_EQ(n[2].word, "丁");
  EXPECT_THROW(nearest_neighbors(emb, "甲", 4), DomainError);
  EXPECT_THROW(nearest_neighbors(emb, "戊", 1), LookupError);
}

TEST(Neighbors, MatchesBruteForce) {
  Rng rng(41);
  std::vector<std::string> words;
  std::vector<double> values;
  for (int i = 0; i < 20; ++i) {
    words.push_back("w" + std::to_string(i));
    for (int d = 0; d < 8; ++d) values.push_back(rng.uniform(-1, 1));
  }
  const EmbeddingMatrix emb(words, 8, values);
  for (std::size_t q = 0; q < 20; ++q) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < 20; ++j)
      if (j != q) all.emplace_back(-cosine(emb.row(q), emb.row(j)), j);
    std::sort(all.begin(), all.end());
    const auto got = nearest_neighbors(emb, words[q], 19);
    ASSERT_EQ(got.size(), 19u);
    for (std::size_t i = 0; i < 19; ++i) {
      EXPECT_EQ(got[i].word, words[all[i].second]);
      EXPECT_NEAR(got[i].similarity, -all[i].first, 1e-15);
      if (i) {
        EXPECT_GE(got[i - 1].similarity, got[i].similarity);
      }
    }
  }
}

TEST(EmbeddingFile, RoundTripAndErrors) {
  const auto dir = testkit::scratch_dir("emb");
  const auto emb = small_embeddings();
  save_embeddings(emb, dir / "e.txt");
  EXPECT_EQ(testkit::read_bytes(dir / "e.txt").substr(0, 4), "4 2\n");
  const auto back = load_embeddings(dir / "e.txt");
  EXPECT_EQ(back.words(), emb.words());
  for (std::size_t i = 0; i < emb.values().size(); ++i) EXPECT_NEAR(back.values()[i], emb.values()[i], 1e-9);
  EXPECT_EQ(back.find("丙"), 2u);
  EXPECT_EQ(back.find("戊"), 4u);

  EXPECT_THROW(parse_embeddings("2 3\na 1 2 3\nb 1 2 3\nc 1 2 3\n"), FormatError);
  EXPECT_THROW(parse_embeddings("2 3\na 1 2 3\n"), FormatError);
  EXPECT_THROW(parse_embeddings(""), FormatError);
  EXPECT_THROW(parse_embeddings("1 3\na 1 x 3\n"), FormatError);
  EXPECT_THROW(parse_embeddings("1 3\na 1 2\n"), FormatError);
  EXPECT_THROW(parse_embeddings("2 1\na 1\na 2\n"), FormatError);
  EXPECT_THROW(load_embeddings(dir / "absent.txt"), FormatError);
  EXPECT_THROW(EmbeddingMatrix({"a"}, 2, {1.0}), FormatError);
}
