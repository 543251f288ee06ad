// SPDX-License-Identifier: Apache-2.0
#include "vcwe/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vcwe/error.hpp"
#include "vcwe/utf8.hpp"

namespace vcwe {

using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

// ------------------------------------------------------------------- config

std::string to_string(CharEncoder e) { return e == CharEncoder::cnn ? "cnn" : "lookup"; }
std::string to_string(Composer c) { return c == Composer::bilstm_attention ? "bilstm_attention" : "average"; }

CharEncoder parse_char_encoder(std::string_view text) {
  if (text == "cnn") return CharEncoder::cnn;
  if (text == "lookup") return CharEncoder::lookup;
  throw DomainError("unknown character encoder '" + std::string(text) + "' (expected cnn|lookup)");
}

Composer parse_composer(std::string_view text) {
  if (text == "bilstm_attention") return Composer::bilstm_attention;
  if (text == "average") return Composer::average;
  throw DomainError("unknown composer '" + std::string(text) + "' (expected bilstm_attention|average)");
}

namespace {

std::size_t pooled(std::size_t in, std::size_t pool) { return in < pool ? 0 : (in - pool) / pool + 1; }

}  // namespace

std::size_t ModelConfig::cnn_features() const {
  if (kernel == 0 || kernel > kGlyphSide) return 0;
  const std::size_t s1 = pooled(kGlyphSide - kernel + 1, pool);
  if (s1 < kernel) return 0;
  const std::size_t s2 = pooled(s1 - kernel + 1, pool);
  return conv2_channels * s2 * s2;
}

void ModelConfig::validate() const {
  if (dim == 0 || char_dim == 0) throw DomainError("model dimensions must be positive");
  if (composer == Composer::bilstm_attention) {
    if (lstm_hidden == 0 || attention_dim == 0) throw DomainError("LSTM hidden and attention sizes must be positive");
    if (2 * lstm_hidden != dim)
      throw DomainError("Bi-LSTM output 2*" + std::to_string(lstm_hidden) + " must equal embedding dim " +
                        std::to_string(dim));
  } else if (char_dim != dim) {
    throw DomainError("averaging composer needs char_dim == dim (" + std::to_string(char_dim) + " vs " +
                      std::to_string(dim) + ")");
  }
  if (char_encoder == CharEncoder::cnn) {
    if (conv1_channels == 0 || conv2_channels == 0 || pool == 0)
      throw DomainError("CNN channel counts and pool size must be positive");
    if (cnn_features() == 0) throw DomainError("CNN kernel/pool sizes leave no spatial extent on a 40x40 glyph");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"char_dim", char_dim},
          {"lstm_hidden", lstm_hidden},
          {"attention_dim", attention_dim},
          {"conv1_channels", conv1_channels},
          {"conv2_channels", conv2_channels},
          {"kernel", kernel},
          {"pool", pool},
          {"char_encoder", to_string(char_encoder)},
          {"composer", to_string(composer)},
          {"bn_momentum", bn_momentum},
          {"bn_eps", bn_eps}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.char_dim = j.at("char_dim").get<std::size_t>();
  c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  c.attention_dim = j.at("attention_dim").get<std::size_t>();
  c.conv1_channels = j.at("conv1_channels").get<std::size_t>();
  c.conv2_channels = j.at("conv2_channels").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.pool = j.at("pool").get<std::size_t>();
  c.char_encoder = parse_char_encoder(j.at("char_encoder").get<std::string>());
  c.composer = parse_composer(j.at("composer").get<std::string>());
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  return c;
}

// ------------------------------------------------------------ initializers

namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor xavier(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor lstm_bias(std::size_t hidden) {
  Tensor b(Shape{4 * hidden});
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;  // forget gate
  return b;
}

}  // namespace

CharCnn::CharCnn(const ModelConfig& c, Rng& rng)
    : conv1_weight("cnn.conv1.weight",
                   xavier({c.conv1_channels, 1, c.kernel, c.kernel}, c.kernel * c.kernel,
                          c.conv1_channels * c.kernel * c.kernel, rng)),
      conv1_bias("cnn.conv1.bias", Tensor(Shape{c.conv1_channels})),
      bn1_gamma("cnn.bn1.gamma", Tensor(Shape{c.conv1_channels}, 1.0)),
      bn1_beta("cnn.bn1.beta", Tensor(Shape{c.conv1_channels})),
      conv2_weight("cnn.conv2.weight",
                   xavier({c.conv2_channels, c.conv1_channels, c.kernel, c.kernel},
                          c.conv1_channels * c.kernel * c.kernel, c.conv2_channels * c.kernel * c.kernel, rng)),
      conv2_bias("cnn.conv2.bias", Tensor(Shape{c.conv2_channels})),
      bn2_gamma("cnn.bn2.gamma", Tensor(Shape{c.conv2_channels}, 1.0)),
      bn2_beta("cnn.bn2.beta", Tensor(Shape{c.conv2_channels})),
      fc_weight("cnn.fc.weight", xavier({c.cnn_features(), c.char_dim}, c.cnn_features(), c.char_dim, rng)),
      fc_bias("cnn.fc.bias", Tensor(Shape{c.char_dim})),
      bn1_stats(c.conv1_channels),
      bn2_stats(c.conv2_channels) {}

ComposerParams::ComposerParams(const ModelConfig& c, Rng& rng)
    : fwd_input("composer.fwd.input", xavier({c.char_dim, 4 * c.lstm_hidden}, c.char_dim, 4 * c.lstm_hidden, rng)),
      fwd_recurrent("composer.fwd.recurrent",
                    xavier({c.lstm_hidden, 4 * c.lstm_hidden}, c.lstm_hidden, 4 * c.lstm_hidden, rng)),
      fwd_bias("composer.fwd.bias", lstm_bias(c.lstm_hidden)),
      bwd_input("composer.bwd.input", xavier({c.char_dim, 4 * c.lstm_hidden}, c.char_dim, 4 * c.lstm_hidden, rng)),
      bwd_recurrent("composer.bwd.recurrent",
                    xavier({c.lstm_hidden, 4 * c.lstm_hidden}, c.lstm_hidden, 4 * c.lstm_hidden, rng)),
      bwd_bias("composer.bwd.bias", lstm_bias(c.lstm_hidden)),
      attention_u("composer.attention.u",
                  xavier({c.attention_dim, 2 * c.lstm_hidden}, 2 * c.lstm_hidden, c.attention_dim, rng)),
      attention_v("composer.attention.v", xavier({c.attention_dim}, c.attention_dim, 1, rng)) {}

// -------------------------------------------------------------------- model

VcweModel::VcweModel(ModelConfig config, const Vocabulary& vocab, std::uint64_t seed)
    : target_table("target_table", Tensor()),
      context_table("context_table", Tensor()),
      config_(config) {
  config_.validate();
  if (vocab.empty()) throw EmptyVocabularyError("model needs a non-empty vocabulary");
  charset_ = vocab.charset();
  std::map<char32_t, std::size_t> index;
  for (std::size_t i = 0; i < charset_.size(); ++i) index[charset_[i]] = i;
  for (const auto& word : vocab.words()) {
    std::vector<std::size_t> chars;
    for (char32_t cp : utf8::decode(word)) chars.push_back(index.at(cp));
    if (chars.empty()) throw DomainError("vocabulary contains an empty word");
    word_chars_.push_back(std::move(chars));
  }

  Rng rng(mix_seed(seed, 0x5eed));
  const std::size_t v = vocab.size(), d = config_.dim;
  const double bound = 0.5 / static_cast<double>(d);
  target_table = Parameter("target_table", uniform({v, d}, bound, rng), true);
  context_table = Parameter("context_table", Tensor(Shape{v, d}), true);
  if (config_.char_encoder == CharEncoder::cnn) {
    cnn.emplace(config_, rng);
  } else {
    char_table.emplace("char_table",
                       xavier({charset_.size(), config_.char_dim}, config_.char_dim, config_.char_dim, rng), true);
  }
  if (config_.composer == Composer::bilstm_attention) composer.emplace(config_, rng);
}

std::vector<Parameter*> VcweModel::parameters() {
  std::vector<Parameter*> out{&target_table, &context_table};
  if (char_table) out.push_back(&*char_table);
  if (cnn)
    for (Parameter* p : {&cnn->conv1_weight, &cnn->conv1_bias, &cnn->bn1_gamma, &cnn->bn1_beta, &cnn->conv2_weight,
                         &cnn->conv2_bias, &cnn->bn2_gamma, &cnn->bn2_beta, &cnn->fc_weight, &cnn->fc_bias})
      out.push_back(p);
  if (composer)
    for (Parameter* p : {&composer->fwd_input, &composer->fwd_recurrent, &composer->fwd_bias, &composer->bwd_input,
                         &composer->bwd_recurrent, &composer->bwd_bias, &composer->attention_u,
                         &composer->attention_v})
      out.push_back(p);
  return out;
}

std::vector<const Parameter*> VcweModel::parameters() const {
  auto mutable_params = const_cast<VcweModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<std::pair<std::string, ad::RunningStats*>> VcweModel::running_stats() {
  if (!cnn) return {};
  return {{"cnn.bn1", &cnn->bn1_stats}, {"cnn.bn2", &cnn->bn2_stats}};
}

BoundModel VcweModel::bind(ad::Graph& g) {
  BoundModel b;
  if (cnn) {
    auto& c = *cnn;
    b.cnn = BoundModel::Cnn{g.parameter(c.conv1_weight), g.parameter(c.conv1_bias), g.parameter(c.bn1_gamma),
                            g.parameter(c.bn1_beta),     g.parameter(c.conv2_weight), g.parameter(c.conv2_bias),
                            g.parameter(c.bn2_gamma),    g.parameter(c.bn2_beta),   g.parameter(c.fc_weight),
                            g.parameter(c.fc_bias)};
  }
  if (composer) {
    auto& c = *composer;
    b.composer = BoundModel::Bilstm{
        {g.parameter(c.fwd_input), g.parameter(c.fwd_recurrent), g.parameter(c.fwd_bias)},
        {g.parameter(c.bwd_input), g.parameter(c.bwd_recurrent), g.parameter(c.bwd_bias)},
        ad::transpose(g.parameter(c.attention_u)),
        g.parameter(c.attention_v)};
  }
  return b;
}

// ---------------------------------------------------------- graph building

Tensor glyph_tensor(const GlyphBank& bank, std::span<const char32_t> charset) {
  if (!bank.centered()) throw StateError("glyph bank must be mean-centered before feeding the CNN");
  const auto missing = bank.missing(charset);
  if (!missing.empty()) throw MissingGlyphError(missing);
  Tensor out(Shape{charset.size(), 1, kGlyphSide, kGlyphSide});
  for (std::size_t i = 0; i < charset.size(); ++i) {
    const auto& px = bank.at(charset[i]).pixels;
    std::copy(px.begin(), px.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * kGlyphPixels));
  }
  return out;
}

namespace {

// conv -> maxpool -> batchnorm, twice, then flatten -> linear.
Var cnn_forward(const ModelConfig& cfg, const BoundModel::Cnn& p, Var x, ad::RunningStats* stats1,
                ad::RunningStats* stats2, ad::NormMode mode) {
  const std::size_t n = x.shape()[0];
  x = ad::conv2d(x, p.conv1_weight, p.conv1_bias);
  x = ad::maxpool2d(x, cfg.pool, cfg.pool).output;
  x = ad::batchnorm2d(x, p.bn1_gamma, p.bn1_beta, stats1, mode, cfg.bn_momentum, cfg.bn_eps);
  x = ad::conv2d(x, p.conv2_weight, p.conv2_bias);
  x = ad::maxpool2d(x, cfg.pool, cfg.pool).output;
  x = ad::batchnorm2d(x, p.bn2_gamma, p.bn2_beta, stats2, mode, cfg.bn_momentum, cfg.bn_eps);
  x = ad::reshape(x, Shape{n, cfg.cnn_features()});
  return ad::linear(x, p.fc_weight, p.fc_bias);
}

}  // namespace

Var encode_chars(ad::Graph& g, VcweModel& model, const BoundModel& bound, const Tensor& glyphs,
                 std::span<const std::size_t> chars, ad::NormMode mode, bool lock_stats) {
  const ModelConfig& cfg = model.config();
  if (cfg.char_encoder == CharEncoder::lookup) return g.lookup(*model.char_table, chars);

  if (glyphs.rank() != 4 || glyphs.dim(0) != model.charset().size())
    throw ShapeError("glyph tensor does not match the model charset");
  Tensor images(Shape{chars.size(), 1, kGlyphSide, kGlyphSide});
  for (std::size_t i = 0; i < chars.size(); ++i)
    std::copy_n(glyphs.data().begin() + static_cast<std::ptrdiff_t>(chars[i] * kGlyphPixels), kGlyphPixels,
                images.data().begin() + static_cast<std::ptrdiff_t>(i * kGlyphPixels));

  CharCnn& cnn = *model.cnn;
  ad::RunningStats s1 = cnn.bn1_stats, s2 = cnn.bn2_stats;
  ad::RunningStats* stats1 = &cnn.bn1_stats;
  ad::RunningStats* stats2 = &cnn.bn2_stats;
  const bool local = lock_stats && mode == ad::NormMode::train;
  if (local) {
    std::lock_guard lock(model.stats_mutex());
    s1 = cnn.bn1_stats;
    s2 = cnn.bn2_stats;
    stats1 = &s1;
    stats2 = &s2;
  }

  Var e = cnn_forward(cfg, *bound.cnn, g.constant(std::move(images)), stats1, stats2, mode);
  if (local) {
    std::lock_guard lock(model.stats_mutex());
    cnn.bn1_stats = s1;
    cnn.bn2_stats = s2;
  }
  return e;
}

ComposedWord compose(ad::Graph& g, const ModelConfig& cfg, const BoundModel& bound, std::span<const Var> chars) {
  const std::size_t n = chars.size();
  if (n == 0) throw DomainError("cannot compose a word with no characters");
  ComposedWord out;
  if (cfg.composer == Composer::average) {
    out.m = ad::mean_rows(ad::stack(chars));
    out.alpha = g.constant(Tensor(Shape{n}, 1.0 / static_cast<double>(n)));
    return out;
  }

  const auto& p = *bound.composer;
  const std::size_t h = cfg.lstm_hidden;
  std::vector<Var> fwd(n), bwd(n);
  ad::LstmState state{g.constant(Tensor(Shape{h})), g.constant(Tensor(Shape{h}))};
  for (std::size_t i = 0; i < n; ++i) {
    state = ad::lstm_cell(chars[i], state, p.forward);
    fwd[i] = state.h;
  }
  state = {g.constant(Tensor(Shape{h})), g.constant(Tensor(Shape{h}))};
  for (std::size_t i = n; i-- > 0;) {
    state = ad::lstm_cell(chars[i], state, p.backward);
    bwd[i] = state.h;
  }
  out.hidden.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.hidden[i] = ad::concat(fwd[i], bwd[i]);

  Var hidden = ad::stack(out.hidden);                                   // [n, 2h]
  Var scores = ad::matvec(ad::tanh(ad::matmul(hidden, p.attention_u_t)), p.attention_v);  // [n]
  out.alpha = ad::softmax(scores);
  out.m = ad::reshape(ad::matmul(ad::reshape(out.alpha, Shape{1, n}), hidden), Shape{2 * h});
  return out;
}

BatchObjective batch_objective(ad::Graph& g, VcweModel& model, const Tensor& glyphs, const PairBatch& batch,
                               ad::NormMode mode, bool lock_stats) {
  const std::size_t b = batch.pairs.size(), k = batch.negatives_per_pair;
  if (b == 0) throw DomainError("empty pair batch");
  if (k == 0) throw DomainError("at least one negative per pair is required");
  if (batch.negatives.size() != b * k) throw ShapeError("negatives do not match pairs x negatives_per_pair");
  const std::size_t v = model.vocab_size();

  // Words needing a composed vector: every context and every negative.
  std::vector<WordId> words;
  for (const auto& pr : batch.pairs) words.push_back(pr.context);
  words.insert(words.end(), batch.negatives.begin(), batch.negatives.end());
  for (WordId w : words)
    if (w >= v) throw LookupError("word id " + std::to_string(w) + " outside vocabulary");
  for (const auto& pr : batch.pairs)
    if (pr.target >= v) throw LookupError("word id " + std::to_string(pr.target) + " outside vocabulary");
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());

  std::vector<std::size_t> chars;
  for (WordId w : words)
    for (std::size_t c : model.word_chars()[w]) chars.push_back(c);
  std::sort(chars.begin(), chars.end());
  chars.erase(std::unique(chars.begin(), chars.end()), chars.end());

  BoundModel bound = model.bind(g);
  Var e = encode_chars(g, model, bound, glyphs, chars, mode, lock_stats);

  std::vector<Var> composed;
  composed.reserve(words.size());
  std::vector<Var> rows;
  for (WordId w : words) {
    rows.clear();
    for (std::size_t c : model.word_chars()[w]) {
      const auto pos = static_cast<std::size_t>(std::lower_bound(chars.begin(), chars.end(), c) - chars.begin());
      rows.push_back(ad::row(e, pos));
    }
    composed.push_back(compose(g, model.config(), bound, rows).m);
  }
  Var m_all = ad::stack(composed);

  auto slot = [&](WordId w) {
    return static_cast<std::size_t>(std::lower_bound(words.begin(), words.end(), w) - words.begin());
  };
  std::vector<std::size_t> targets, contexts, context_slots, repeated_targets, negatives, negative_slots;
  for (std::size_t i = 0; i < b; ++i) {
    targets.push_back(batch.pairs[i].target);
    contexts.push_back(batch.pairs[i].context);
    context_slots.push_back(slot(batch.pairs[i].context));
    for (std::size_t j = 0; j < k; ++j) {
      const WordId n = batch.negatives[i * k + j];
      repeated_targets.push_back(i);
      negatives.push_back(n);
      negative_slots.push_back(slot(n));
    }
  }

  Var w = g.lookup(model.target_table, targets);
  Var w_rep = ad::gather_rows(w, repeated_targets);
  Var c_pos = g.lookup(model.context_table, contexts);
  Var c_neg = g.lookup(model.context_table, negatives);
  Var m_pos = ad::gather_rows(m_all, context_slots);
  Var m_neg = ad::gather_rows(m_all, negative_slots);

  Var l1 = ad::add(ad::sum(ad::log_sigmoid(ad::rowwise_dot(w, c_pos))),
                   ad::sum(ad::log_sigmoid(ad::neg(ad::rowwise_dot(w_rep, c_neg)))));
  Var l2 = ad::add(ad::sum(ad::log_sigmoid(ad::rowwise_dot(w, m_pos))),
                   ad::sum(ad::log_sigmoid(ad::neg(ad::rowwise_dot(w_rep, m_neg)))));
  Var objective = ad::add(l1, l2);
  return {objective, ad::neg(objective)};
}

// ------------------------------------------------------------ value helpers

namespace {

std::vector<double> values_of(const Var& v) { return v.value().values(); }

}  // namespace

std::vector<double> char_embed(VcweModel& model, const GlyphImage& centered, ad::NormMode mode) {
  if (!model.cnn) throw StateError("model has no CNN character encoder");
  ad::Graph g;
  BoundModel bound = model.bind(g);
  Var x = g.constant(Tensor(Shape{1, 1, kGlyphSide, kGlyphSide},
                            std::vector<double>(centered.pixels.begin(), centered.pixels.end())));
  Var e = cnn_forward(model.config(), *bound.cnn, x, &model.cnn->bn1_stats, &model.cnn->bn2_stats, mode);
  return values_of(ad::reshape(e, Shape{model.config().char_dim}));
}

std::vector<double> char_embed(VcweModel& model, const GlyphBank& bank, char32_t codepoint, ad::NormMode mode) {
  if (!bank.centered()) throw StateError("char_embed expects a mean-centered glyph bank");
  return char_embed(model, bank.at(codepoint), mode);
}

WordComposition compose_word(VcweModel& model, const std::vector<std::vector<double>>& chars) {
  if (chars.empty()) throw DomainError("cannot compose a word with no characters");
  ad::Graph g;
  BoundModel bound = model.bind(g);
  std::vector<Var> rows;
  for (const auto& e : chars) {
    if (e.size() != model.config().char_dim)
      throw ShapeError("character vector has length " + std::to_string(e.size()) + ", expected " +
                       std::to_string(model.config().char_dim));
    rows.push_back(g.constant(Tensor(Shape{e.size()}, e)));
  }
  ComposedWord word = compose(g, model.config(), bound, rows);
  WordComposition out{values_of(word.alpha), values_of(word.m), {}};
  for (const auto& h : word.hidden) out.hidden.push_back(values_of(h));
  return out;
}

ContextRepresentation context_representation(VcweModel& model, WordId word, const GlyphBank& bank) {
  if (word >= model.vocab_size()) throw LookupError("word id " + std::to_string(word) + " outside vocabulary");
  const std::size_t d = model.config().dim;
  ContextRepresentation out;
  const auto table = model.context_table.value().data();
  out.c.assign(table.begin() + static_cast<std::ptrdiff_t>(word * d),
               table.begin() + static_cast<std::ptrdiff_t>((word + 1) * d));

  const auto& chars = model.word_chars()[word];
  Tensor glyphs;
  if (model.config().char_encoder == CharEncoder::cnn) {
    std::vector<char32_t> needed;
    for (std::size_t c : chars) needed.push_back(model.charset()[c]);
    const auto missing = bank.missing(needed);
    if (!missing.empty()) throw MissingGlyphError(missing);
    glyphs = glyph_tensor(bank, model.charset());
  }
  ad::Graph g;
  BoundModel bound = model.bind(g);
  Var e = encode_chars(g, model, bound, glyphs, chars, ad::NormMode::eval);
  std::vector<Var> rows;
  for (std::size_t i = 0; i < chars.size(); ++i) rows.push_back(ad::row(e, i));
  out.m = values_of(compose(g, model.config(), bound, rows).m);
  return out;
}

double log_sigmoid(double x) { return x < 0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x)); }

double pair_probability(std::span<const double> w, std::span<const double> c) {
  if (w.size() != c.size()) throw ShapeError("pair_probability: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * c[i];
  return s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

double vcwe_loss(std::span<const double> w, std::span<const double> c,
                 const std::vector<std::vector<double>>& negative_c, std::span<const double> m_c,
                 const std::vector<std::vector<double>>& negative_m) {
  const std::size_t d = w.size();
  if (negative_c.empty() || negative_c.size() != negative_m.size())
    throw DomainError("vcwe_loss needs k >= 1 negatives for both the lookup and composed terms");
  auto dot = [&](std::span<const double> other) {
    if (other.size() != d) throw ShapeError("vcwe_loss: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += w[i] * other[i];
    return s;
  };
  double l1 = log_sigmoid(dot(c));
  for (const auto& n : negative_c) l1 += log_sigmoid(-dot(n));
  double l2 = log_sigmoid(dot(m_c));
  for (const auto& n : negative_m) l2 += log_sigmoid(-dot(n));
  return l1 + l2;
}

}  // namespace vcwe
