// SPDX-License-Identifier: Apache-2.0
//
// Visual character-enhanced word embedding network.
//
//   glyph image --CharCnn--> e_i  (per character)
//   e_1..e_n --Bi-LSTM--> h_i = [h_i^fwd ; h_i^bwd]
//   alpha = softmax_i(v . tanh(U h_i)),  m = sum_i alpha_i h_i
//
// Target words use a plain lookup row w. Contexts and negatives are scored
// twice, once through their lookup row c and once through their composed
// vector m, and both terms enter the skip-gram negative-sampling objective.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcwe/autodiff.hpp"
#include "vcwe/corpus.hpp"
#include "vcwe/glyphs.hpp"
#include "vcwe/ops.hpp"
#include "vcwe/rng.hpp"

namespace vcwe {

/// How character vectors e_i are produced.
enum class CharEncoder {
  cnn,     // from glyph images
  lookup,  // randomly initialized per-character table, no images
};

/// How e_1..e_n become the word vector m.
enum class Composer {
  bilstm_attention,
  average,  // mean of e_i; requires char_dim == dim
};

std::string to_string(CharEncoder e);
std::string to_string(Composer c);
CharEncoder parse_char_encoder(std::string_view text);
Composer parse_composer(std::string_view text);

struct ModelConfig {
  std::size_t dim = 100;
  std::size_t char_dim = 64;
  std::size_t lstm_hidden = 50;
  std::size_t attention_dim = 64;
  std::size_t conv1_channels = 16;
  std::size_t conv2_channels = 32;
  std::size_t kernel = 5;
  std::size_t pool = 2;
  CharEncoder char_encoder = CharEncoder::cnn;
  Composer composer = Composer::bilstm_attention;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  /// Throws DomainError on inconsistent sizes (e.g. 2*lstm_hidden != dim).
  void validate() const;
  /// Flattened CNN feature length feeding the final linear layer.
  std::size_t cnn_features() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct CharCnn {
  CharCnn(const ModelConfig& config, Rng& rng);

  ad::Parameter conv1_weight, conv1_bias, bn1_gamma, bn1_beta;
  ad::Parameter conv2_weight, conv2_bias, bn2_gamma, bn2_beta;
  ad::Parameter fc_weight, fc_bias;
  ad::RunningStats bn1_stats, bn2_stats;
};

struct ComposerParams {
  ComposerParams(const ModelConfig& config, Rng& rng);

  ad::Parameter fwd_input, fwd_recurrent, fwd_bias;
  ad::Parameter bwd_input, bwd_recurrent, bwd_bias;
  ad::Parameter attention_u;  // [d_a, 2h]
  ad::Parameter attention_v;  // [d_a]
};

/// Parameters of one model bound as leaves of a graph.
struct BoundModel {
  struct Cnn {
    ad::Var conv1_weight, conv1_bias, bn1_gamma, bn1_beta;
    ad::Var conv2_weight, conv2_bias, bn2_gamma, bn2_beta;
    ad::Var fc_weight, fc_bias;
  };
  struct Bilstm {
    ad::LstmWeights forward, backward;
    ad::Var attention_u_t;  // U transposed, [2h, d_a]
    ad::Var attention_v;
  };
  std::optional<Cnn> cnn;
  std::optional<Bilstm> composer;
};

/// Graph-level word composition.
struct ComposedWord {
  ad::Var alpha;              // [n]
  ad::Var m;                  // [D]
  std::vector<ad::Var> hidden;  // h_i, [2h] each (empty for averaging)
};

class VcweModel {
 public:
  VcweModel(ModelConfig config, const Vocabulary& vocab, std::uint64_t seed);
  VcweModel(const VcweModel&) = delete;
  VcweModel& operator=(const VcweModel&) = delete;
  VcweModel(VcweModel&&) = default;
  VcweModel& operator=(VcweModel&&) = default;

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return word_chars_.size(); }
  /// Sorted unique codepoints of the vocabulary.
  const std::vector<char32_t>& charset() const noexcept { return charset_; }
  /// Per word, indices into charset() in reading order.
  const std::vector<std::vector<std::size_t>>& word_chars() const noexcept { return word_chars_; }

  ad::Parameter target_table;   // [V, D], the exported embeddings
  ad::Parameter context_table;  // [V, D]
  std::optional<ad::Parameter> char_table;  // lookup encoder only
  std::optional<CharCnn> cnn;
  std::optional<ComposerParams> composer;

  /// Every trainable parameter, in a fixed order.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  /// Batch-norm running statistics, named for serialization.
  std::vector<std::pair<std::string, ad::RunningStats*>> running_stats();

  BoundModel bind(ad::Graph& graph);

  /// Guards running-statistic updates when graphs are built concurrently.
  std::mutex& stats_mutex() const { return *stats_mutex_; }

 private:
  ModelConfig config_;
  std::vector<char32_t> charset_;
  std::vector<std::vector<std::size_t>> word_chars_;
  std::unique_ptr<std::mutex> stats_mutex_ = std::make_unique<std::mutex>();
};

/// Centered glyph images for `charset` stacked as [N, 1, 40, 40]. Throws
/// MissingGlyphError listing every absent codepoint and StateError when the
/// bank is not centered.
ad::Tensor glyph_tensor(const GlyphBank& bank, std::span<const char32_t> charset);

/// e vectors [chars.size(), d_char] for charset indices `chars`.
/// `glyphs` is the glyph_tensor of the model's charset (ignored by the lookup
/// encoder). Train-mode batch statistics are folded into the model's running
/// statistics; pass `lock_stats` when other threads train the same model.
ad::Var encode_chars(ad::Graph& graph, VcweModel& model, const BoundModel& bound, const ad::Tensor& glyphs,
                     std::span<const std::size_t> chars, ad::NormMode mode, bool lock_stats = false);

/// Composes a word from its character vectors (each [d_char]); n >= 1.
ComposedWord compose(ad::Graph& graph, const ModelConfig& config, const BoundModel& bound,
                     std::span<const ad::Var> chars);

struct PairBatch {
  std::vector<TrainingPair> pairs;
  /// pairs.size() * negatives_per_pair ids, grouped by pair.
  std::vector<WordId> negatives;
  std::size_t negatives_per_pair = 0;
};

struct BatchObjective {
  ad::Var objective;  // L summed over the batch (maximized)
  ad::Var loss;       // -L (minimized)
};

BatchObjective batch_objective(ad::Graph& graph, VcweModel& model, const ad::Tensor& glyphs, const PairBatch& batch,
                               ad::NormMode mode, bool lock_stats = false);

// ------------------------------------------------------ value-level helpers

/// CNN embedding of one centered 40x40 image.
std::vector<double> char_embed(VcweModel& model, const GlyphImage& centered, ad::NormMode mode);
/// Same, looking the glyph up in a bank; throws StateError if the bank is not centered.
std::vector<double> char_embed(VcweModel& model, const GlyphBank& bank, char32_t codepoint, ad::NormMode mode);

struct WordComposition {
  std::vector<double> alpha;
  std::vector<double> m;
  std::vector<std::vector<double>> hidden;
};

/// Throws DomainError for an empty character sequence.
WordComposition compose_word(VcweModel& model, const std::vector<std::vector<double>>& chars);

struct ContextRepresentation {
  std::vector<double> c;  // lookup context row
  std::vector<double> m;  // composed visual vector
};

/// Eval-mode context representation of `word`.
ContextRepresentation context_representation(VcweModel& model, WordId word, const GlyphBank& bank);

/// sigma(w . c)
double pair_probability(std::span<const double> w, std::span<const double> c);

/// Stable log(sigmoid(x)).
double log_sigmoid(double x);

/// L1 + L2 for one (target, context) pair with k negatives; each vector is D long.
double vcwe_loss(std::span<const double> w, std::span<const double> c,
                 const std::vector<std::vector<double>>& negative_c, std::span<const double> m_c,
                 const std::vector<std::vector<double>>& negative_m);

}  // namespace vcwe
