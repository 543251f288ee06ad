// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gradcheck.hpp"
#include "toy.hpp"
#include "vcwe/error.hpp"
#include "vcwe/model.hpp"

using namespace vcwe;
using vcwe::testkit::check_gradients;

namespace {

double sigm(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Vocabulary toy_vocab() { return Vocabulary::from_records({"山水", "电脑", "水", "山川河"}, {5, 4, 3, 2}); }

ModelConfig small_lookup_config() {
  ModelConfig c;
  c.dim = 4;
  c.char_dim = 3;
  c.lstm_hidden = 2;
  c.attention_dim = 3;
  c.char_encoder = CharEncoder::lookup;
  return c;
}

GlyphBank centered_bank(const Vocabulary& vocab, std::uint64_t seed = 5) {
  return center_bank(synth_glyph_bank(vocab.charset(), seed));
}

std::vector<std::vector<double>> random_chars(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& e : out)
    for (double& v : e) v = rng.uniform(-1, 1);
  return out;
}

// Plain re-evaluation of one LSTM direction; returns h per position.
std::vector<std::vector<double>> lstm_pass(const ComposerParams& p, bool forward,
                                           const std::vector<std::vector<double>>& e, std::size_t h) {
  const auto& wx = (forward ? p.fwd_input : p.bwd_input).value();
  const auto& wh = (forward ? p.fwd_recurrent : p.bwd_recurrent).value();
  const auto& b = (forward ? p.fwd_bias : p.bwd_bias).value();
  const std::size_t n = e.size(), din = e[0].size();
  std::vector<std::vector<double>> out(n);
  std::vector<double> hp(h, 0.0), cp(h, 0.0);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t pos = forward ? step : n - 1 - step;
    std::vector<double> hn(h), cn(h);
    for (std::size_t j = 0; j < h; ++j) {
      double z[4];
      for (std::size_t gate = 0; gate < 4; ++gate) {
        const std::size_t k = gate * h + j;
        z[gate] = b[k];
        for (std::size_t i = 0; i < din; ++i) z[gate] += e[pos][i] * wx.at(i, k);
        for (std::size_t i = 0; i < h; ++i) z[gate] += hp[i] * wh.at(i, k);
      }
      cn[j] = sigm(z[1]) * cp[j] + sigm(z[0]) * std::tanh(z[2]);
      hn[j] = sigm(z[3]) * std::tanh(cn[j]);
    }
    out[pos] = hn;
    hp = hn;
    cp = cn;
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------------ config

TEST(ModelConfig, DefaultsAndValidation) {
  ModelConfig c;
  EXPECT_EQ(c.dim, 100u);
  EXPECT_EQ(c.char_dim, 64u);
  EXPECT_EQ(2 * c.lstm_hidden, c.dim);
  EXPECT_EQ(c.cnn_features(), 32u * 7 * 7);
  EXPECT_NO_THROW(c.validate());
  c.lstm_hidden = 40;
  EXPECT_THROW(c.validate(), DomainError);
  ModelConfig avg;
  avg.composer = Composer::average;
  EXPECT_THROW(avg.validate(), DomainError);
  avg.char_dim = avg.dim;
  EXPECT_NO_THROW(avg.validate());
  ModelConfig big;
  big.kernel = 30;
  EXPECT_THROW(big.validate(), DomainError);
  EXPECT_EQ(ModelConfig::from_json(testkit::tiny_model_config().to_json()), testkit::tiny_model_config());
  EXPECT_EQ(parse_composer("average"), Composer::average);
  EXPECT_EQ(parse_char_encoder(to_string(CharEncoder::lookup)), CharEncoder::lookup);
  EXPECT_THROW(parse_composer("gru"), DomainError);
}

TEST(VcweModel, ShapesAndInitialization) {
  const auto vocab = toy_vocab();
  VcweModel model(ModelConfig{}, vocab, 1);
  EXPECT_EQ(model.target_table.value().shape(), (ad::Shape{4, 100}));
  EXPECT_EQ(model.context_table.value().shape(), (ad::Shape{4, 100}));
  for (double v : model.target_table.value().values()) EXPECT_LE(std::abs(v), 0.5 / 100);
  for (double v : model.context_table.value().values()) EXPECT_EQ(v, 0.0);
  ASSERT_TRUE(model.composer);
  EXPECT_EQ(model.composer->attention_u.value().shape(), (ad::Shape{64, 100}));
  const auto& bias = model.composer->fwd_bias.value();
  for (std::size_t j = 0; j < 200; ++j) EXPECT_EQ(bias[j], (j >= 50 && j < 100) ? 1.0 : 0.0);
  EXPECT_EQ(model.word_chars()[3].size(), 3u);
  EXPECT_EQ(model.charset().size(), 6u);
  VcweModel again(ModelConfig{}, vocab, 1);
  EXPECT_EQ(again.target_table.value(), model.target_table.value());
  EXPECT_EQ(again.cnn->fc_weight.value(), model.cnn->fc_weight.value());
}

// -------------------------------------------------------------- char_embed

TEST(CharEmbed, ShapeAndEvalDeterminism) {
  const auto vocab = toy_vocab();
  VcweModel model(ModelConfig{}, vocab, 2);
  const auto bank = centered_bank(vocab);
  const auto e = char_embed(model, bank, U'山', ad::NormMode::eval);
  EXPECT_EQ(e.size(), 64u);
  EXPECT_EQ(char_embed(model, bank, U'山', ad::NormMode::eval), e);
  EXPECT_NE(char_embed(model, bank, U'水', ad::NormMode::eval), e);
  EXPECT_THROW(char_embed(model, synth_glyph_bank(vocab.charset(), 5), U'山', ad::NormMode::eval), StateError);
  EXPECT_THROW(char_embed(model, bank, U'人', ad::NormMode::eval), MissingGlyphError);
}

TEST(CharEmbed, ProbeGradientWrtConv1) {
  const auto vocab = toy_vocab();
  VcweModel model(testkit::tiny_model_config(), vocab, 3);
  const auto bank = centered_bank(vocab);
  const ad::Tensor glyphs = glyph_tensor(bank, model.charset());
  const std::size_t chars[] = {0, 2, 4};
  auto r = check_gradients({&model.cnn->conv1_weight, &model.cnn->conv1_bias}, [&](ad::Graph& g) {
    BoundModel bound = model.bind(g);
    return ad::sum(encode_chars(g, model, bound, glyphs, chars, ad::NormMode::eval));
  });
  EXPECT_LT(r.max_error, 1e-4) << r.worst;
}

// ------------------------------------------------------------ composition

TEST(ComposeWord, SingleCharacter) {
  VcweModel model(small_lookup_config(), toy_vocab(), 4);
  const auto w = compose_word(model, random_chars(1, 3, 1));
  ASSERT_EQ(w.alpha.size(), 1u);
  EXPECT_EQ(w.alpha[0], 1.0);
  EXPECT_EQ(w.m, w.hidden[0]);
  EXPECT_THROW(compose_word(model, {}), DomainError);
  EXPECT_THROW(compose_word(model, random_chars(2, 5, 1)), ShapeError);
}

TEST(ComposeWord, AttentionIsDistributionAndMInConvexHull) {
  VcweModel model(ModelConfig{.dim = 8, .char_dim = 6, .lstm_hidden = 4, .attention_dim = 5,
                              .char_encoder = CharEncoder::lookup},
                  toy_vocab(), 5);
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto w = compose_word(model, random_chars(n, 6, 100 * n + seed));
      double total = 0.0;
      for (double a : w.alpha) {
        EXPECT_GE(a, 0.0);
        total += a;
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
      ASSERT_EQ(w.m.size(), 8u);
      for (std::size_t d = 0; d < 8; ++d) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& h : w.hidden) {
          lo = std::min(lo, h[d]);
          hi = std::max(hi, h[d]);
        }
        EXPECT_GE(w.m[d], lo - 1e-15);
        EXPECT_LE(w.m[d], hi + 1e-15);
      }
    }
}

TEST(ComposeWord, MatchesStepByStepEvaluation) {
  VcweModel model(small_lookup_config(), toy_vocab(), 6);
  const auto chars = random_chars(3, 3, 7);
  const auto w = compose_word(model, chars);
  const auto& p = *model.composer;
  const auto fwd = lstm_pass(p, true, chars, 2);
  const auto bwd = lstm_pass(p, false, chars, 2);
  std::vector<std::vector<double>> hidden(3);
  std::vector<double> scores(3);
  for (std::size_t i = 0; i < 3; ++i) {
    hidden[i] = {fwd[i][0], fwd[i][1], bwd[i][0], bwd[i][1]};
    double s = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      double u = 0.0;
      for (std::size_t d = 0; d < 4; ++d) u += p.attention_u.value().at(a, d) * hidden[i][d];
      s += p.attention_v.value()[a] * std::tanh(u);
    }
    scores[i] = s;
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(w.alpha[i], std::exp(scores[i] - mx) / z, 1e-10);
    for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(w.hidden[i][d], hidden[i][d], 1e-10);
  }
  for (std::size_t d = 0; d < 4; ++d) {
    double m = 0.0;
    for (std::size_t i = 0; i < 3; ++i) m += std::exp(scores[i] - mx) / z * hidden[i][d];
    EXPECT_NEAR(w.m[d], m, 1e-10);
  }
}

TEST(ComposeWord, OrderSensitiveUnlikeAveraging) {
  VcweModel model(small_lookup_config(), toy_vocab(), 8);
  auto chars = random_chars(3, 3, 9);
  const auto a = compose_word(model, chars).m;
  std::reverse(chars.begin(), chars.end());
  EXPECT_NE(compose_word(model, chars).m, a);

  ModelConfig avg = small_lookup_config();
  avg.composer = Composer::average;
  avg.char_dim = avg.dim;
  VcweModel averaging(avg, toy_vocab(), 8);
  auto e = random_chars(3, 4, 10);
  const auto before = compose_word(averaging, e);
  std::reverse(e.begin(), e.end());
  const auto after = compose_word(averaging, e);
  for (std::size_t d = 0; d < 4; ++d) {
    EXPECT_NEAR(before.m[d], after.m[d], 1e-15);
    EXPECT_NEAR(before.m[d], (e[0][d] + e[1][d] + e[2][d]) / 3.0, 1e-15);
  }
}

// -------------------------------------------------------------------- loss

TEST(PairProbability, Values) {
  const std::vector<double> w = {0.5, -1.0}, c = {2.0, 1.0}, zero = {0.0, 0.0};
  EXPECT_EQ(pair_probability(w, c), 0.5);
  EXPECT_EQ(pair_probability(zero, c), 0.5);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = rng.uniform(-3, 3);
    for (auto& v : b) v = rng.uniform(-3, 3);
    double s = 0.0;
    for (int i = 0; i < 6; ++i) s += a[i] * b[i];
    EXPECT_NEAR(pair_probability(a, b), 1.0 / (1.0 + std::exp(-s)), 1e-15);
    EXPECT_NEAR(1.0 - pair_probability(a, b), 1.0 / (1.0 + std::exp(s)), 1e-15);
  }
}

TEST(VcweLoss, AnalyticCases) {
  const std::vector<double> w = {1.0, 0.0, 0.0}, ortho = {0.0, 2.0, -1.0};
  const std::vector<std::vector<double>> five(5, ortho), one(1, ortho);
  EXPECT_NEAR(vcwe_loss(w, ortho, five, ortho, five), 12 * std::log(0.5), 1e-12);
  EXPECT_NEAR(vcwe_loss(w, ortho, five, ortho, five), -8.3178, 1e-4);
  EXPECT_NEAR(vcwe_loss(w, ortho, one, ortho, one), 4 * std::log(0.5), 1e-12);
  EXPECT_NEAR(vcwe_loss(w, ortho, one, ortho, one), -2.7726, 1e-4);
  EXPECT_THROW(vcwe_loss(w, ortho, {}, ortho, {}), DomainError);
  const std::vector<double> short_c = {1.0};
  EXPECT_THROW(vcwe_loss(w, short_c, one, ortho, one), ShapeError);
}

TEST(VcweLoss, MatchesDirectEvaluation) {
  Rng rng(12);
  auto vec = [&] {
    std::vector<double> v(5);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return v;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = vec(), c = vec(), m = vec();
    const std::vector<std::vector<double>> nc = {vec(), vec()}, nm = {vec(), vec()};
    double expected = std::log(sigm(dot(w, c))) + std::log(sigm(dot(w, m)));
    for (int i = 0; i < 2; ++i) expected += std::log(sigm(-dot(w, nc[i]))) + std::log(sigm(-dot(w, nm[i])));
    EXPECT_NEAR(vcwe_loss(w, c, nc, m, nm), expected, 1e-12);
  }
  EXPECT_NEAR(log_sigmoid(-40.0), -40.0 - std::log1p(std::exp(-40.0)), 1e-12);
  EXPECT_EQ(log_sigmoid(800.0), 0.0);
}

// --------------------------------------------------- context representation

TEST(ContextRepresentation, SingleCharacterAndDeterminism) {
  const auto vocab = toy_vocab();
  VcweModel model(testkit::tiny_model_config(), vocab, 13);
  const auto bank = centered_bank(vocab);
  const WordId shui = vocab.id("水");
  const auto a = context_representation(model, shui, bank);
  const auto b = context_representation(model, shui, bank);
  EXPECT_EQ(a.c, b.c);
  EXPECT_EQ(a.m, b.m);
  const auto e = char_embed(model, bank, U'水', ad::NormMode::eval);
  const auto composed = compose_word(model, {e});
  EXPECT_EQ(a.m, composed.hidden[0]);
  EXPECT_EQ(a.m.size(), 8u);
}

TEST(ContextRepresentation, ManualPipelineForTwoCharacters) {
  const auto vocab = toy_vocab();
  VcweModel model(testkit::tiny_model_config(), vocab, 14);
  const auto bank = centered_bank(vocab);
  const WordId w = vocab.id("电脑");
  model.context_table.value().at(w, 3) = 0.75;
  const auto rep = context_representation(model, w, bank);
  EXPECT_EQ(rep.c[3], 0.75);
  const auto e1 = char_embed(model, bank, U'电', ad::NormMode::eval);
  const auto e2 = char_embed(model, bank, U'脑', ad::NormMode::eval);
  const auto manual = compose_word(model, {e1, e2});
  for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(rep.m[d], manual.m[d], 1e-12);

  GlyphBank partial;
  partial.insert(U'电', synth_glyph(U'电', 1));
  EXPECT_THROW(context_representation(model, w, center_bank(partial)), MissingGlyphError);
}

// ------------------------------------------------------ batch objective

namespace {

PairBatch toy_batch() {
  PairBatch batch;
  batch.pairs = {{0, 1}, {2, 3}, {1, 0}};
  batch.negatives = {3, 2, 0, 1, 2, 2};
  batch.negatives_per_pair = 2;
  return batch;
}

}  // namespace

TEST(BatchObjective, EqualsSumOfPerPairLoss) {
  const auto vocab = toy_vocab();
  VcweModel model(testkit::tiny_model_config(), vocab, 15);
  Rng rng(2);
  for (double& v : model.context_table.value().data()) v = rng.uniform(-0.5, 0.5);
  const auto bank = centered_bank(vocab);
  const ad::Tensor glyphs = glyph_tensor(bank, model.charset());
  const auto batch = toy_batch();

  // Eval mode so composed vectors do not depend on batch composition.
  ad::Graph g;
  const auto obj = batch_objective(g, model, glyphs, batch, ad::NormMode::eval);
  auto row = [&](const ad::Parameter& p, WordId id) {
    const auto d = p.value().data();
    return std::vector<double>(d.begin() + id * 8, d.begin() + (id + 1) * 8);
  };
  double expected = 0.0;
  for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
    const auto [t, c] = batch.pairs[i];
    std::vector<std::vector<double>> nc, nm;
    for (std::size_t j = 0; j < 2; ++j) {
      const WordId n = batch.negatives[i * 2 + j];
      nc.push_back(row(model.context_table, n));
      nm.push_back(context_representation(model, n, bank).m);
    }
    expected += vcwe_loss(row(model.target_table, t), row(model.context_table, c), nc,
                          context_representation(model, c, bank).m, nm);
  }
  EXPECT_NEAR(obj.objective.value().item(), expected, 1e-12);
  EXPECT_EQ(obj.loss.value().item(), -obj.objective.value().item());
}

TEST(BatchObjective, FullLossGradientCheck) {
  const auto vocab = toy_vocab();
  VcweModel model(testkit::tiny_model_config(), vocab, 16);
  Rng rng(4);
  for (double& v : model.context_table.value().data()) v = rng.uniform(-0.5, 0.5);
  for (double& v : model.target_table.value().data()) v = rng.uniform(-0.5, 0.5);
  const ad::Tensor glyphs = glyph_tensor(centered_bank(vocab), model.charset());
  const auto batch = toy_batch();
  auto r = check_gradients(model.parameters(), [&](ad::Graph& g) {
    return batch_objective(g, model, glyphs, batch, ad::NormMode::train).loss;
  });
  EXPECT_LT(r.max_error, 1e-4) << r.worst;
}

TEST(BatchObjective, GradientReachesCnnAndTablesStaySparse) {
  const auto vocab = toy_vocab();
  VcweModel model(testkit::tiny_model_config(), vocab, 17);
  const ad::Tensor glyphs = glyph_tensor(centered_bank(vocab), model.charset());
  PairBatch batch;
  batch.pairs = {{0, 1}};
  batch.negatives = {2};
  batch.negatives_per_pair = 1;
  ad::Graph g;
  const auto grads = g.backward(batch_objective(g, model, glyphs, batch, ad::NormMode::train).loss);
  const ad::Tensor* conv1 = grads.find_dense(model.cnn->conv1_weight);
  ASSERT_NE(conv1, nullptr);
  double norm = 0.0;
  for (double v : conv1->values()) norm += v * v;
  EXPECT_GT(norm, 0.0);
  const auto* target_rows = grads.find_sparse(model.target_table);
  const auto* context_rows = grads.find_sparse(model.context_table);
  ASSERT_NE(target_rows, nullptr);
  ASSERT_NE(context_rows, nullptr);
  EXPECT_EQ(target_rows->size(), 1u);
  EXPECT_TRUE(target_rows->contains(0));
  EXPECT_EQ(context_rows->size(), 2u);
  EXPECT_FALSE(context_rows->contains(3));
}

TEST(BatchObjective, AblationGradientChecks) {
  const auto vocab = toy_vocab();
  for (int variant = 0; variant < 2; ++variant) {
    ModelConfig cfg = testkit::tiny_model_config();
    if (variant == 0) {
      cfg.char_encoder = CharEncoder::lookup;
    } else {
      cfg.composer = Composer::average;
      cfg.char_dim = cfg.dim;
    }
    VcweModel model(cfg, vocab, 18);
    Rng rng(5);
    for (double& v : model.context_table.value().data()) v = rng.uniform(-0.5, 0.5);
    const ad::Tensor glyphs = variant == 0 ? ad::Tensor() : glyph_tensor(centered_bank(vocab), model.charset());
    auto r = check_gradients(model.parameters(), [&](ad::Graph& g) {
      return batch_objective(g, model, glyphs, toy_batch(), ad::NormMode::train).loss;
    });
    EXPECT_LT(r.max_error, 1e-4) << variant << " " << r.worst;
  }
}

TEST(BatchObjective, RejectsBadBatches) {
  const auto vocab = toy_vocab();
  VcweModel model(small_lookup_config(), vocab, 19);
  ad::Graph g;
  PairBatch empty;
  empty.negatives_per_pair = 1;
  EXPECT_THROW(batch_objective(g, model, {}, empty, ad::NormMode::train), DomainError);
  PairBatch bad = toy_batch();
  bad.negatives.pop_back();
  EXPECT_THROW(batch_objective(g, model, {}, bad, ad::NormMode::train), ShapeError);
  PairBatch oov = toy_batch();
  oov.pairs[0].target = 99;
  EXPECT_THROW(batch_objective(g, model, {}, oov, ad::NormMode::train), LookupError);
}
