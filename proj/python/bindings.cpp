// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "vcwe/cli.hpp"
#include "vcwe/error.hpp"
#include "vcwe/trainer.hpp"

namespace py = pybind11;
using namespace vcwe;

namespace {

py::array_t<double> image_array(const GlyphImage& g) {
  py::array_t<double> a({kGlyphSide, kGlyphSide});
  std::copy(g.pixels.begin(), g.pixels.end(), a.mutable_data());
  return a;
}

GlyphImage array_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(0) != static_cast<py::ssize_t>(kGlyphSide) ||
      a.shape(1) != static_cast<py::ssize_t>(kGlyphSide))
    throw DimensionError("glyph arrays must be 40x40");
  GlyphImage g;
  std::copy(a.data(), a.data() + kGlyphPixels, g.pixels.begin());
  return g;
}

py::array_t<double> matrix_array(const EmbeddingMatrix& emb) {
  py::array_t<double> a({emb.size(), emb.dim()});
  std::copy(emb.values().begin(), emb.values().end(), a.mutable_data());
  return a;
}

// Settings dict -> TrainConfig, using the same keys as the command line.
TrainConfig make_config(const py::dict& settings) {
  TrainConfig config;
  bool hidden_set = false, char_dim_set = false;
  for (const auto& [k, v] : settings) {
    const std::string key = py::str(k);
    const std::string value = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "1" : "0") : std::string(py::str(v));
    cli::apply_setting(config, key, value);
    hidden_set |= key == "lstm_hidden" || key == "lstm-hidden";
    char_dim_set |= key == "char_dim" || key == "char-dim";
  }
  if (!hidden_set) config.model.lstm_hidden = config.model.dim / 2;
  if (config.model.composer == Composer::average && !char_dim_set) config.model.char_dim = config.model.dim;
  config.validate();
  return config;
}

py::dict report_dict(const EpochReport& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["mean_loss"] = r.mean_loss;
  d["pairs"] = r.pairs;
  d["batches"] = r.batches;
  return d;
}

}  // namespace

PYBIND11_MODULE(_vcwe, m) {
  m.doc() = "Visual character-enhanced Chinese word embeddings";

  auto base = py::register_exception<Error>(m, "VcweError", PyExc_RuntimeError);
  py::register_exception<DecodeError>(m, "DecodeError", base);
  py::register_exception<EmptyVocabularyError>(m, "EmptyVocabularyError", base);
  py::register_exception<DomainError>(m, "DomainError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<StateError>(m, "StateError", base);
  py::register_exception<NumericError>(m, "NumericError", base);
  py::register_exception<VersionError>(m, "VersionError", base);
  py::register_exception<UndefinedError>(m, "UndefinedError", base);
  py::register_exception<LookupError>(m, "LookupError", base);
  py::register_exception<InsufficientPairsError>(m, "InsufficientPairsError", base);
  py::register_exception<MissingGlyphError>(m, "MissingGlyphError", base);

  // ---------------------------------------------------------------- corpus
  m.def("normalize_text", &normalize_text, py::arg("text"),
        "Split lines into tokens, keeping only CJK ideographs U+4E00..U+9FA5.");

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("from_records", &Vocabulary::from_records, py::arg("words"), py::arg("counts"))
      .def_static("build", &build_vocabulary, py::arg("sentences"), py::arg("min_count"))
      .def_static("load", &Vocabulary::load, py::arg("path"))
      .def("save", &Vocabulary::save, py::arg("path"))
      .def("__len__", &Vocabulary::size)
      .def("__contains__", &Vocabulary::contains)
      .def("id", &Vocabulary::id, py::arg("word"))
      .def("frequency", &Vocabulary::frequency, py::arg("id"))
      .def_property_readonly("words", &Vocabulary::words)
      .def_property_readonly("counts", &Vocabulary::counts)
      .def_property_readonly("total_tokens", &Vocabulary::total_tokens)
      .def("charset", &Vocabulary::charset);

  py::class_<TokenStream>(m, "TokenStream")
      .def_static("encode", &encode, py::arg("sentences"), py::arg("vocab"))
      .def_static("load", &TokenStream::load, py::arg("path"), py::arg("vocab_size"))
      .def("save", &TokenStream::save, py::arg("path"))
      .def_readonly("sentences", &TokenStream::sentences)
      .def("token_count", &TokenStream::token_count);

  m.def("subsample_keep_prob", &subsample_keep_prob, py::arg("freq"), py::arg("threshold"));
  m.def(
      "negative_probabilities",
      [](const Vocabulary& vocab, double power) {
        const auto table = build_negative_table(vocab, power);
        std::vector<double> p(table.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = table.probability(i);
        return p;
      },
      py::arg("vocab"), py::arg("power") = 0.75);
  m.def(
      "sample_negatives",
      [](const Vocabulary& vocab, std::size_t k, std::uint64_t seed, double power) {
        Rng rng(seed);
        return sample_negatives(build_negative_table(vocab, power), k, rng);
      },
      py::arg("vocab"), py::arg("k"), py::arg("seed"), py::arg("power") = 0.75);
  m.def(
      "generate_pairs",
      [](const TokenStream& stream, const Vocabulary& vocab, std::size_t window, double threshold,
         std::uint64_t seed) {
        Rng rng(seed);
        std::vector<std::pair<WordId, WordId>> out;
        for (const auto& p : generate_pairs(stream, vocab, window, threshold, rng)) out.emplace_back(p.target, p.context);
        return out;
      },
      py::arg("stream"), py::arg("vocab"), py::arg("window"), py::arg("threshold"), py::arg("seed"));

  // ---------------------------------------------------------------- glyphs
  m.def("read_pgm", [](const std::filesystem::path& p) { return image_array(read_pgm(p)); }, py::arg("path"));
  m.def(
      "write_pgm", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                      const std::filesystem::path& p) { write_pgm(array_image(a), p); },
      py::arg("image"), py::arg("path"));
  m.def("glyph_filename", &glyph_filename, py::arg("codepoint"));
  m.def(
      "synth_glyph", [](char32_t cp, std::uint64_t seed) { return image_array(synth_glyph(cp, seed)); },
      py::arg("char"), py::arg("seed"));
  m.def(
      "load_glyph_bank",
      [](const std::filesystem::path& dir) {
        const GlyphBank bank = load_glyph_bank(dir);
        py::dict d;
        for (const auto& [cp, img] : bank.images()) d[py::cast(std::u32string(1, cp))] = image_array(img);
        return d;
      },
      py::arg("directory"));
  m.def(
      "write_synthetic_glyphs",
      [](const std::vector<char32_t>& chars, std::uint64_t seed, const std::filesystem::path& dir) {
        save_glyph_bank(synth_glyph_bank(chars, seed), dir);
      },
      py::arg("chars"), py::arg("seed"), py::arg("directory"));

  // ------------------------------------------------------------------ loss
  m.def(
      "vcwe_loss",
      [](const std::vector<double>& w, const std::vector<double>& c, const std::vector<std::vector<double>>& neg_c,
         const std::vector<double>& m_c, const std::vector<std::vector<double>>& neg_m) {
        return vcwe_loss(w, c, neg_c, m_c, neg_m);
      },
      py::arg("w"), py::arg("c"), py::arg("negative_c"), py::arg("m_c"), py::arg("negative_m"));
  m.def(
      "pair_probability",
      [](const std::vector<double>& w, const std::vector<double>& c) { return pair_probability(w, c); },
      py::arg("w"), py::arg("c"));

  // --------------------------------------------------------------- trainer
  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const Vocabulary& vocab, const TokenStream& stream, const py::dict& settings,
                       std::optional<std::filesystem::path> glyphs) {
             const TrainConfig config = make_config(settings);
             GlyphBank bank;
             if (config.model.char_encoder == CharEncoder::cnn)
               bank = glyphs ? load_glyph_bank(*glyphs) : synth_glyph_bank(vocab.charset(), config.seed);
             return Trainer(config, vocab, stream, bank);
           }),
           py::arg("vocab"), py::arg("stream"), py::arg("settings") = py::dict(), py::arg("glyphs") = py::none(),
           "Settings use the command-line keys; without `glyphs` synthetic images are generated.")
      .def_static(
          "resume",
          [](const std::filesystem::path& checkpoint, const TokenStream& stream,
             std::optional<std::filesystem::path> glyphs) {
            const Checkpoint cp = load_checkpoint(checkpoint);
            GlyphBank bank;
            if (cp.config.model.char_encoder == CharEncoder::cnn)
              bank = glyphs ? load_glyph_bank(*glyphs) : synth_glyph_bank(cp.vocab.charset(), cp.config.seed);
            return Trainer::resume(cp, stream, bank);
          },
          py::arg("checkpoint"), py::arg("stream"), py::arg("glyphs") = py::none())
      .def("run_epoch", [](Trainer& t) { return report_dict(t.run_epoch()); })
      .def("train",
           [](Trainer& t, std::optional<std::size_t> epochs) {
             if (epochs) t.config().epochs = *epochs;
             py::list out;
             for (const auto& r : t.train()) out.append(report_dict(r));
             return out;
           },
           py::arg("epochs") = py::none())
      .def("save_checkpoint", &Trainer::save_checkpoint, py::arg("path"))
      .def("export_embeddings", &Trainer::export_embeddings, py::arg("path"))
      .def("embeddings", [](const Trainer& t) { return t.embeddings(); })
      .def_property_readonly("steps", &Trainer::steps)
      .def_property_readonly("epochs_done", &Trainer::epochs_done)
      .def_property_readonly("config", [](const Trainer& t) { return t.config().to_json().dump(); });

  // ------------------------------------------------------------------ eval
  py::class_<EmbeddingMatrix>(m, "Embeddings")
      .def(py::init([](std::vector<std::string> words,
                       const py::array_t<double, py::array::c_style | py::array::forcecast>& values) {
             if (values.ndim() != 2) throw ShapeError("embedding values must be a 2-D array");
             return EmbeddingMatrix(std::move(words), static_cast<std::size_t>(values.shape(1)),
                                    std::vector<double>(values.data(), values.data() + values.size()));
           }),
           py::arg("words"), py::arg("values"))
      .def_static("load", &load_embeddings, py::arg("path"))
      .def("save", [](const EmbeddingMatrix& e, const std::filesystem::path& p) { save_embeddings(e, p); })
      .def("__len__", &EmbeddingMatrix::size)
      .def("__contains__", &EmbeddingMatrix::contains)
      .def_property_readonly("dim", &EmbeddingMatrix::dim)
      .def_property_readonly("words", &EmbeddingMatrix::words)
      .def_property_readonly("matrix", &matrix_array)
      .def("vector", [](const EmbeddingMatrix& e, const std::string& w) {
        const std::size_t i = e.find(w);
        if (i == e.size()) throw LookupError("word not in vocabulary: '" + w + "'");
        const auto r = e.row(i);
        return std::vector<double>(r.begin(), r.end());
      });

  m.def(
      "cosine", [](const std::vector<double>& u, const std::vector<double>& v) { return cosine(u, v); },
      py::arg("u"), py::arg("v"));
  m.def(
      "spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "evaluate_similarity",
      [](const EmbeddingMatrix& emb, const std::filesystem::path& dataset) {
        const auto r = evaluate_similarity(emb, load_similarity_dataset(dataset));
        py::dict d;
        d["rho"] = r.rho;
        d["pairs"] = r.evaluated;
        d["skipped"] = r.skipped;
        return d;
      },
      py::arg("embeddings"), py::arg("dataset"));
  m.def(
      "nearest_neighbors",
      [](const EmbeddingMatrix& emb, const std::string& word, std::size_t k) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& n : nearest_neighbors(emb, word, k)) out.emplace_back(n.word, n.similarity);
        return out;
      },
      py::arg("embeddings"), py::arg("word"), py::arg("k") = 10);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "vcwe");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a vcwe command line in-process; returns (exit_code, stdout, stderr).");
}
