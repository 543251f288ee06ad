// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcwe/adam.hpp"
#include "vcwe/archive.hpp"
#include "vcwe/corpus.hpp"
#include "vcwe/eval.hpp"
#include "vcwe/glyphs.hpp"
#include "vcwe/model.hpp"

namespace vcwe {

enum class TrainMode { deterministic, async };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
  ModelConfig model;
  std::size_t window = 5;
  std::size_t negatives = 5;
  double subsample = 1e-5;
  double negative_power = 0.75;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  std::uint64_t min_count = 100;
  TrainMode mode = TrainMode::deterministic;
  std::size_t workers = 2;  // async mode only
  std::string precision = "f64";
  double clip_norm = 0.0;   // 0 disables clipping

  /// Throws DomainError naming the offending field.
  void validate() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochReport {
  std::size_t epoch = 0;   // 1-based
  double mean_loss = 0.0;  // average of -L per pair
  std::size_t pairs = 0;
  std::size_t batches = 0;
};

/// Checkpoint file contents ("VCWE1" archive).
struct Checkpoint {
  TrainConfig config;
  Vocabulary vocab;
  std::optional<MeanImage> mean;
  std::size_t epochs_done = 0;
  std::uint64_t steps = 0;
  ad::Archive archive;
};

inline constexpr std::string_view kCheckpointMagic = "VCWE1";

/// Throws VersionError for an unknown version byte and FormatError for
/// foreign or truncated files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Target-table rows of a checkpoint paired with its vocabulary.
EmbeddingMatrix checkpoint_embeddings(const Checkpoint& checkpoint);

class Trainer {
 public:
  /// `bank` may be raw (centered here) or already centered; it is ignored by
  /// the lookup character encoder. Throws MissingGlyphError when any
  /// vocabulary character lacks an image.
  Trainer(TrainConfig config, Vocabulary vocab, TokenStream stream, const GlyphBank& bank);

  /// Restores parameters, optimizer state and progress. A raw `bank` is
  /// centered with the checkpoint's stored mean image.
  static Trainer resume(const Checkpoint& checkpoint, TokenStream stream, const GlyphBank& bank);

  /// One pass over all sentences with fresh subsampling randomness.
  /// Throws NumericError if a batch loss is not finite.
  EpochReport run_epoch();

  /// Runs epochs until config().epochs have completed in total.
  std::vector<EpochReport> train(const std::function<void(const EpochReport&)>& on_epoch = {});

  void save_checkpoint(const std::filesystem::path& path) const;
  EmbeddingMatrix embeddings() const;
  void export_embeddings(const std::filesystem::path& path) const;

  const TrainConfig& config() const noexcept { return config_; }
  TrainConfig& config() noexcept { return config_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  VcweModel& model() noexcept { return model_; }
  const VcweModel& model() const noexcept { return model_; }
  const ad::Adam& optimizer() const noexcept { return adam_; }
  const GlyphBank& glyphs() const noexcept { return bank_; }
  std::size_t epochs_done() const noexcept { return epochs_done_; }
  std::uint64_t steps() const noexcept { return adam_.step_count(); }

  /// Batches (pairs and negatives) of the given 1-based epoch, exactly as
  /// run_epoch would draw them.
  std::vector<PairBatch> epoch_batches(std::size_t epoch) const;

 private:
  Trainer(TrainConfig config, Vocabulary vocab, TokenStream stream);
  void attach_glyphs(const GlyphBank& bank, const std::optional<MeanImage>& mean);
  double train_batch(const PairBatch& batch);
  EpochReport run_epoch_async(std::vector<PairBatch> batches);

  TrainConfig config_;
  Vocabulary vocab_;
  TokenStream stream_;
  SamplerTable negative_table_;
  VcweModel model_;
  ad::Adam adam_;
  GlyphBank bank_;
  ad::Tensor glyph_tensor_;
  std::size_t epochs_done_ = 0;
};

}  // namespace vcwe
