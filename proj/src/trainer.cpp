// SPDX-License-Identifier: Apache-2.0
#include "vcwe/trainer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include "vcwe/error.hpp"

namespace vcwe {

std::string to_string(TrainMode mode) { return mode == TrainMode::deterministic ? "deterministic" : "async"; }

TrainMode parse_train_mode(std::string_view text) {
  if (text == "deterministic") return TrainMode::deterministic;
  if (text == "async") return TrainMode::async;
  throw DomainError("unknown training mode '" + std::string(text) + "' (expected deterministic|async)");
}

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  model.validate();
  auto positive = [](bool ok, const char* field) {
    if (!ok) throw DomainError(std::string("training option '") + field + "' must be positive");
  };
  positive(window > 0, "window");
  positive(negatives > 0, "negatives");
  positive(subsample > 0.0, "subsample");
  positive(negative_power > 0.0, "negative_power");
  positive(learning_rate > 0.0, "learning_rate");
  positive(batch_size > 0, "batch_size");
  positive(min_count > 0, "min_count");
  positive(workers > 0, "workers");
  if (!(clip_norm >= 0.0)) throw DomainError("training option 'clip_norm' must be non-negative");
  if (precision != "f64")
    throw DomainError("precision '" + precision + "' is not supported; only f64 is implemented");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"model", model.to_json()},
          {"window", window},
          {"negatives", negatives},
          {"subsample", subsample},
          {"negative_power", negative_power},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"min_count", min_count},
          {"mode", to_string(mode)},
          {"workers", workers},
          {"precision", precision},
          {"clip_norm", clip_norm}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.model = ModelConfig::from_json(j.at("model"));
  c.window = j.at("window").get<std::size_t>();
  c.negatives = j.at("negatives").get<std::size_t>();
  c.subsample = j.at("subsample").get<double>();
  c.negative_power = j.at("negative_power").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.min_count = j.at("min_count").get<std::uint64_t>();
  c.mode = parse_train_mode(j.at("mode").get<std::string>());
  c.workers = j.at("workers").get<std::size_t>();
  c.precision = j.at("precision").get<std::string>();
  c.clip_norm = j.at("clip_norm").get<double>();
  return c;
}

// ----------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config, Vocabulary vocab, TokenStream stream)
    : config_((config.validate(), std::move(config))),
      vocab_(std::move(vocab)),
      stream_(std::move(stream)),
      negative_table_(build_negative_table(vocab_, config_.negative_power)),
      model_(config_.model, vocab_, config_.seed),
      adam_(ad::AdamOptions{config_.learning_rate}) {
  for (const auto& sentence : stream_.sentences)
    for (WordId id : sentence)
      if (id >= vocab_.size()) throw LookupError("token stream references word id " + std::to_string(id));
}

Trainer::Trainer(TrainConfig config, Vocabulary vocab, TokenStream stream, const GlyphBank& bank)
    : Trainer(std::move(config), std::move(vocab), std::move(stream)) {
  attach_glyphs(bank, std::nullopt);
}

void Trainer::attach_glyphs(const GlyphBank& bank, const std::optional<MeanImage>& mean) {
  if (config_.model.char_encoder != CharEncoder::cnn) return;
  const auto missing = bank.missing(model_.charset());
  if (!missing.empty()) throw MissingGlyphError(missing);
  if (bank.centered())
    bank_ = bank;
  else
    bank_ = mean ? bank.centered_copy(*mean) : bank.centered_copy();
  glyph_tensor_ = glyph_tensor(bank_, model_.charset());
}

std::vector<PairBatch> Trainer::epoch_batches(std::size_t epoch) const {
  Rng rng(mix_seed(config_.seed, epoch));
  const auto pairs = generate_pairs(stream_, vocab_, config_.window, config_.subsample, rng);
  std::vector<PairBatch> batches;
  for (std::size_t start = 0; start < pairs.size(); start += config_.batch_size) {
    const std::size_t end = std::min(pairs.size(), start + config_.batch_size);
    PairBatch batch;
    batch.negatives_per_pair = config_.negatives;
    batch.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                       pairs.begin() + static_cast<std::ptrdiff_t>(end));
    batch.negatives.reserve(batch.pairs.size() * config_.negatives);
    for (std::size_t i = start; i < end; ++i) {
      const auto draws = sample_negatives(negative_table_, config_.negatives, rng);
      batch.negatives.insert(batch.negatives.end(), draws.begin(), draws.end());
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

double Trainer::train_batch(const PairBatch& batch) {
  ad::Graph graph;
  auto objective = batch_objective(graph, model_, glyph_tensor_, batch, ad::NormMode::train);
  const double loss = objective.loss.value().item();
  if (!std::isfinite(loss))
    throw NumericError("non-finite batch loss at optimizer step " + std::to_string(adam_.step_count() + 1) +
                       " (epoch " + std::to_string(epochs_done_ + 1) + ")");
  ad::Gradients grads = graph.backward(objective.loss);
  if (config_.clip_norm > 0.0) grads.clip_global_norm(config_.clip_norm);
  adam_.step(grads);
  return loss;
}

EpochReport Trainer::run_epoch() {
  const std::size_t epoch = epochs_done_ + 1;
  auto batches = epoch_batches(epoch);
  if (config_.mode == TrainMode::async) return run_epoch_async(std::move(batches));

  EpochReport report{epoch, 0.0, 0, batches.size()};
  double total = 0.0;
  for (const auto& batch : batches) {
    total += train_batch(batch);
    report.pairs += batch.pairs.size();
  }
  report.mean_loss = report.pairs ? total / static_cast<double>(report.pairs) : 0.0;
  epochs_done_ = epoch;
  return report;
}

// Workers build graphs concurrently against shared parameters (read under a
// shared lock), differentiate without any lock and apply their updates one
// at a time. Update order, hence the result, depends on scheduling.
EpochReport Trainer::run_epoch_async(std::vector<PairBatch> batches) {
  const std::size_t epoch = epochs_done_ + 1;
  EpochReport report{epoch, 0.0, 0, batches.size()};
  std::shared_mutex params;
  std::mutex report_lock;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  double total = 0.0;

  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < batches.size(); i = next++) {
        ad::Graph graph;
        BatchObjective objective;
        {
          std::shared_lock read(params);
          objective = batch_objective(graph, model_, glyph_tensor_, batches[i], ad::NormMode::train, true);
        }
        const double loss = objective.loss.value().item();
        if (!std::isfinite(loss)) throw NumericError("non-finite batch loss in asynchronous epoch " + std::to_string(epoch));
        ad::Gradients grads = graph.backward(objective.loss);
        if (config_.clip_norm > 0.0) grads.clip_global_norm(config_.clip_norm);
        {
          std::unique_lock write(params);
          adam_.step(grads);
        }
        std::lock_guard lock(report_lock);
        total += loss;
        report.pairs += batches[i].pairs.size();
      }
    } catch (...) {
      std::lock_guard lock(report_lock);
      if (!failure) failure = std::current_exception();
      next = batches.size();
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < config_.workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  report.mean_loss = report.pairs ? total / static_cast<double>(report.pairs) : 0.0;
  epochs_done_ = epoch;
  return report;
}

std::vector<EpochReport> Trainer::train(const std::function<void(const EpochReport&)>& on_epoch) {
  std::vector<EpochReport> reports;
  while (epochs_done_ < config_.epochs) {
    reports.push_back(run_epoch());
    if (on_epoch) on_epoch(reports.back());
  }
  return reports;
}

EmbeddingMatrix Trainer::embeddings() const {
  return EmbeddingMatrix(vocab_.words(), config_.model.dim, model_.target_table.value().values());
}

void Trainer::export_embeddings(const std::filesystem::path& path) const { save_embeddings(embeddings(), path); }

// -------------------------------------------------------------- checkpoints

namespace {

constexpr int kFormatVersion = 1;

ad::Tensor image_tensor(const GlyphImage& image) {
  return ad::Tensor(ad::Shape{kGlyphSide, kGlyphSide}, std::vector<double>(image.pixels.begin(), image.pixels.end()));
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  auto& model = const_cast<VcweModel&>(model_);
  nlohmann::json meta;
  meta["format_version"] = kFormatVersion;
  meta["config"] = config_.to_json();
  meta["vocab"] = {{"words", vocab_.words()}, {"counts", vocab_.counts()}};
  meta["epochs_done"] = epochs_done_;
  meta["steps"] = adam_.step_count();

  std::vector<ad::NamedTensor> tensors;
  for (const ad::Parameter* p : model_.parameters()) tensors.push_back({p->name(), &p->value()});
  for (const auto& [name, stats] : model.running_stats()) {
    tensors.push_back({name + ".running_mean", &stats->mean});
    tensors.push_back({name + ".running_var", &stats->var});
  }
  for (const auto& [name, moments] : adam_.moments()) {
    tensors.push_back({"adam.m." + name, &moments.m});
    tensors.push_back({"adam.v." + name, &moments.v});
  }
  ad::Tensor mean;
  meta["has_mean"] = bank_.centered();
  if (bank_.centered()) {
    mean = image_tensor(*bank_.mean());
    tensors.push_back({"glyph_mean", &mean});
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  ad::write_archive(out, kCheckpointMagic, meta, tensors);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Checkpoint cp;
  cp.archive = ad::read_archive(in, kCheckpointMagic);
  const auto& meta = cp.archive.meta;
  try {
    if (meta.at("format_version").get<int>() != kFormatVersion)
      throw VersionError("unsupported checkpoint format version " + meta.at("format_version").dump());
    cp.config = TrainConfig::from_json(meta.at("config"));
    cp.vocab = Vocabulary::from_records(meta.at("vocab").at("words").get<std::vector<std::string>>(),
                                        meta.at("vocab").at("counts").get<std::vector<std::uint64_t>>());
    cp.epochs_done = meta.at("epochs_done").get<std::size_t>();
    cp.steps = meta.at("steps").get<std::uint64_t>();
    if (meta.at("has_mean").get<bool>()) {
      const ad::Tensor& t = cp.archive.at("glyph_mean");
      if (t.size() != kGlyphPixels) throw FormatError("checkpoint mean image has the wrong size");
      MeanImage mean;
      std::copy(t.data().begin(), t.data().end(), mean.pixels.begin());
      cp.mean = mean;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  return cp;
}

EmbeddingMatrix checkpoint_embeddings(const Checkpoint& checkpoint) {
  return EmbeddingMatrix(checkpoint.vocab.words(), checkpoint.config.model.dim,
                         checkpoint.archive.at("target_table").values());
}

Trainer Trainer::resume(const Checkpoint& cp, TokenStream stream, const GlyphBank& bank) {
  Trainer trainer(cp.config, cp.vocab, std::move(stream));
  auto restore = [&](const std::string& name, ad::Tensor& dst) {
    const ad::Tensor& src = cp.archive.at(name);
    if (src.shape() != dst.shape())
      throw FormatError("checkpoint tensor '" + name + "' has shape " + ad::shape_string(src.shape()) + ", expected " +
                        ad::shape_string(dst.shape()));
    dst = src;
  };
  for (ad::Parameter* p : trainer.model_.parameters()) {
    restore(p->name(), p->value());
    const std::string m = "adam.m." + p->name(), v = "adam.v." + p->name();
    if (cp.archive.tensors.contains(m)) {
      auto& moments = trainer.adam_.moments()[p->name()];
      moments.m = cp.archive.at(m);
      moments.v = cp.archive.at(v);
      if (moments.m.shape() != p->value().shape() || moments.v.shape() != p->value().shape())
        throw FormatError("checkpoint optimizer state for '" + p->name() + "' has the wrong shape");
    }
  }
  for (const auto& [name, stats] : trainer.model_.running_stats()) {
    restore(name + ".running_mean", stats->mean);
    restore(name + ".running_var", stats->var);
  }
  trainer.adam_.set_step_count(cp.steps);
  trainer.epochs_done_ = cp.epochs_done;
  trainer.attach_glyphs(bank, cp.mean);
  return trainer;
}

}  // namespace vcwe
