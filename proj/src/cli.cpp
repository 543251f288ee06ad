// SPDX-License-Identifier: Apache-2.0
#include "vcwe/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>

#include "vcwe/error.hpp"

namespace vcwe::cli {

namespace {

template <class T>
T parse_value(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw DomainError("invalid value '" + std::string(text) + "' for '" + std::string(key) + "'");
  return value;
}

using Setter = std::function<void(TrainConfig&, std::string_view, std::string_view)>;

template <class T>
Setter field(T TrainConfig::*member) {
  return [member](TrainConfig& c, std::string_view k, std::string_view v) { c.*member = parse_value<T>(k, v); };
}

template <class T>
Setter model_field(T ModelConfig::*member) {
  return [member](TrainConfig& c, std::string_view k, std::string_view v) { c.model.*member = parse_value<T>(k, v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"dim", model_field(&ModelConfig::dim)},
      {"char-dim", model_field(&ModelConfig::char_dim)},
      {"lstm-hidden", model_field(&ModelConfig::lstm_hidden)},
      {"attention-dim", model_field(&ModelConfig::attention_dim)},
      {"conv1-channels", model_field(&ModelConfig::conv1_channels)},
      {"conv2-channels", model_field(&ModelConfig::conv2_channels)},
      {"kernel", model_field(&ModelConfig::kernel)},
      {"pool", model_field(&ModelConfig::pool)},
      {"bn-momentum", model_field(&ModelConfig::bn_momentum)},
      {"bn-eps", model_field(&ModelConfig::bn_eps)},
      {"char-encoder",
       [](TrainConfig& c, std::string_view, std::string_view v) { c.model.char_encoder = parse_char_encoder(v); }},
      {"composer", [](TrainConfig& c, std::string_view, std::string_view v) { c.model.composer = parse_composer(v); }},
      {"window", field(&TrainConfig::window)},
      {"negatives", field(&TrainConfig::negatives)},
      {"subsample", field(&TrainConfig::subsample)},
      {"negative-power", field(&TrainConfig::negative_power)},
      {"learning-rate", field(&TrainConfig::learning_rate)},
      {"batch-size", field(&TrainConfig::batch_size)},
      {"epochs", field(&TrainConfig::epochs)},
      {"seed", field(&TrainConfig::seed)},
      {"min-count", field(&TrainConfig::min_count)},
      {"mode", [](TrainConfig& c, std::string_view, std::string_view v) { c.mode = parse_train_mode(v); }},
      {"workers", field(&TrainConfig::workers)},
      {"precision", [](TrainConfig& c, std::string_view, std::string_view v) { c.precision = std::string(v); }},
      {"clip-norm", field(&TrainConfig::clip_norm)},
  };
  return table;
}

std::string canonical_key(std::string_view key) {
  std::string k(key);
  for (char& ch : k)
    if (ch == '_') ch = '-';
  return k == "lr" ? "learning-rate" : k;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --------------------------------------------------------------- commands

struct PreprocessArgs {
  std::string corpus, out;
  std::uint64_t min_count = 100;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  if (a.min_count == 0) throw DomainError("--min-count must be positive");
  const auto sentences = normalize_text(read_file(a.corpus));
  const Vocabulary vocab = build_vocabulary(sentences, a.min_count);
  const TokenStream stream = encode(sentences, vocab);
  std::filesystem::create_directories(a.out);
  vocab.save(std::filesystem::path(a.out) / "vocab.txt");
  stream.save(std::filesystem::path(a.out) / "stream.txt");
  err << "wrote " << (std::filesystem::path(a.out) / "vocab.txt").string() << " and stream.txt\n";
  out << "vocabulary=" << vocab.size() << " characters=" << vocab.charset().size()
      << " tokens=" << stream.token_count() << '\n';
  return kOk;
}

struct TrainArgs {
  std::string prep, glyphs, out = ".", config_file, resume;
  bool synthetic = false;
  std::map<std::string, std::optional<std::string>> flags;
};

TrainConfig resolve_config(const TrainArgs& a, const TrainConfig& base, std::set<std::string>& explicit_keys) {
  TrainConfig config = base;
  auto apply = [&](const std::string& key, const std::string& value) {
    apply_setting(config, key, value);
    explicit_keys.insert(canonical_key(key));
  };
  if (!a.config_file.empty())
    for (const auto& [k, v] : read_config_file(a.config_file)) apply(k, v);
  for (const auto& [k, v] : a.flags)
    if (v) apply(k, *v);
  return config;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  std::optional<Checkpoint> checkpoint;
  if (!a.resume.empty()) checkpoint = load_checkpoint(a.resume);

  std::set<std::string> explicit_keys;
  TrainConfig config = resolve_config(a, checkpoint ? checkpoint->config : TrainConfig{}, explicit_keys);
  if (checkpoint) {
    TrainConfig fixed = config;
    fixed.epochs = checkpoint->config.epochs;
    fixed.mode = checkpoint->config.mode;
    fixed.workers = checkpoint->config.workers;
    if (fixed.to_json() != checkpoint->config.to_json())
      throw DomainError("only --epochs, --mode and --workers may change when resuming");
  } else {
    // Derived sizes follow dim unless set explicitly.
    if (!explicit_keys.contains("lstm-hidden")) config.model.lstm_hidden = config.model.dim / 2;
    if (config.model.composer == Composer::average && !explicit_keys.contains("char-dim"))
      config.model.char_dim = config.model.dim;
  }
  config.validate();

  const bool needs_glyphs = config.model.char_encoder == CharEncoder::cnn;
  if (needs_glyphs && a.glyphs.empty() && !a.synthetic)
    throw DomainError("the cnn character encoder needs --glyphs <dir> or --synthetic-glyphs");

  const std::filesystem::path prep(a.prep);
  Vocabulary vocab = Vocabulary::load(prep / "vocab.txt");
  TokenStream stream = TokenStream::load(prep / "stream.txt", vocab.size());
  if (checkpoint && vocab.words() != checkpoint->vocab.words())
    throw FormatError("preprocessed vocabulary does not match the checkpoint");

  GlyphBank bank;
  if (needs_glyphs) {
    const auto charset = vocab.charset();
    bank = a.synthetic ? synth_glyph_bank(charset, config.seed) : load_glyph_bank(a.glyphs);
    const auto missing = bank.missing(charset);
    if (!missing.empty()) throw MissingGlyphError(missing);
  }

  Trainer trainer = checkpoint ? Trainer::resume(*checkpoint, std::move(stream), bank)
                               : Trainer(config, std::move(vocab), std::move(stream), bank);
  trainer.config().epochs = config.epochs;
  trainer.config().mode = config.mode;
  trainer.config().workers = config.workers;

  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  trainer.train([&](const EpochReport& r) {
    err << "epoch " << r.epoch << " loss " << format("%.9g", r.mean_loss) << '\n';
  });
  trainer.save_checkpoint(dir / "checkpoint.vcwe");
  trainer.export_embeddings(dir / "embeddings.txt");
  out << "checkpoint=" << (dir / "checkpoint.vcwe").string() << '\n'
      << "embeddings=" << (dir / "embeddings.txt").string() << '\n';
  return kOk;
}

int cmd_eval_sim(const std::string& embeddings, const std::string& dataset, std::ostream& out) {
  const EmbeddingMatrix emb = load_embeddings(embeddings);
  const auto report = evaluate_similarity(emb, load_similarity_dataset(dataset));
  out << "rho=" << format("%.6f", report.rho) << " pairs=" << report.evaluated << " skipped=" << report.skipped
      << '\n';
  return kOk;
}

int cmd_neighbors(const std::string& embeddings, const std::string& word, std::size_t k, std::ostream& out,
                  std::ostream& err) {
  const EmbeddingMatrix emb = load_embeddings(embeddings);
  if (emb.size() < 2) throw FormatError("need at least two words to list neighbors");
  if (k >= emb.size()) {
    err << "warning: k=" << k << " exceeds V-1; showing " << emb.size() - 1 << " neighbors\n";
    k = emb.size() - 1;
  }
  for (const auto& n : nearest_neighbors(emb, word, k)) out << n.word << '\t' << format("%.6f", n.similarity) << '\n';
  return kOk;
}

int cmd_export(const std::string& checkpoint, const std::string& path, std::ostream& out) {
  save_embeddings(checkpoint_embeddings(load_checkpoint(checkpoint)), path);
  out << "embeddings=" << path << '\n';
  return kOk;
}

}  // namespace

void apply_setting(TrainConfig& config, std::string_view key, std::string_view value) {
  const std::string k = canonical_key(key);
  auto it = setters().find(k);
  if (it == setters().end()) throw DomainError("unknown setting '" + std::string(key) + "'");
  it->second(config, k, value);
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read config file " + path);
  std::map<std::string, std::string> entries;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw DomainError(path + ":" + std::to_string(lineno) + ": expected key=value");
    entries[canonical_key(trim(t.substr(0, eq)))] = trim(t.substr(eq + 1));
  }
  return entries;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual character-enhanced Chinese word embeddings", args.empty() ? "vcwe" : args[0]};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress logs (errors and warnings still print)");

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "Build vocabulary and token stream from a segmented corpus");
  preprocess->add_option("corpus", pre.corpus, "Whitespace-segmented UTF-8 corpus")->required()->check(CLI::ExistingFile);
  preprocess->add_option("-o,--out", pre.out, "Output directory")->required();
  preprocess->add_option("--min-count", pre.min_count, "Drop words seen fewer times")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train embeddings from a preprocessed directory");
  train->add_option("prep", tr.prep, "Directory written by preprocess")->required()->check(CLI::ExistingDirectory);
  train->add_option("-g,--glyphs", tr.glyphs, "Directory of 40x40 PGM glyphs")->check(CLI::ExistingDirectory);
  train->add_flag("--synthetic-glyphs", tr.synthetic, "Use generated stand-in glyphs");
  train->add_option("-o,--out", tr.out, "Output directory for checkpoint and embeddings");
  train->add_option("-c,--config", tr.config_file, "key=value settings file (flags take precedence)")
      ->check(CLI::ExistingFile);
  train->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  for (const auto& [key, setter] : setters()) {
    (void)setter;
    tr.flags[key];
  }
  for (auto& [key, value] : tr.flags) train->add_option("--" + key, value);

  std::string emb_path, dataset_path, word, export_out;
  std::size_t k = 10;
  auto* eval = app.add_subcommand("eval-sim", "Spearman correlation on a word-similarity dataset");
  eval->add_option("embeddings", emb_path)->required()->check(CLI::ExistingFile);
  eval->add_option("dataset", dataset_path)->required()->check(CLI::ExistingFile);

  auto* neighbors = app.add_subcommand("neighbors", "Most similar words by cosine");
  neighbors->add_option("embeddings", emb_path)->required()->check(CLI::ExistingFile);
  neighbors->add_option("word", word)->required();
  neighbors->add_option("-k", k, "Number of neighbors")->capture_default_str()->check(CLI::PositiveNumber);

  std::string checkpoint_path;
  auto* exp = app.add_subcommand("export", "Write the embedding text file of a checkpoint");
  exp->add_option("checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  exp->add_option("-o,--out", export_out, "Embedding file")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("vcwe");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  std::ostream silent(nullptr);
  std::ostream& log = quiet ? silent : err;
  try {
    if (*preprocess) return cmd_preprocess(pre, out, log);
    if (*train) return cmd_train(tr, out, log);
    if (*eval) return cmd_eval_sim(emb_path, dataset_path, out);
    if (*neighbors) return cmd_neighbors(emb_path, word, k, out, err);
    if (*exp) return cmd_export(checkpoint_path, export_out, out);
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const UndefinedError& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace vcwe::cli
