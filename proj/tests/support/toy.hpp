// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcwe/trainer.hpp"

namespace vcwe::testkit {

/// Two topic groups of four two-character words. Each sentence draws all of
/// its words from one group, alternating groups line by line.
struct ToyCorpus {
  std::vector<std::string> group_a;
  std::vector<std::string> group_b;
  std::string text;
};

ToyCorpus make_toy_corpus(std::size_t sentences, std::size_t words_per_sentence, std::uint64_t seed);

/// Small network for fast tests (D=8, d_char=6, h=4).
ModelConfig tiny_model_config();

struct Prepared {
  Vocabulary vocab;
  TokenStream stream;
};

Prepared prepare(const std::string& text, std::uint64_t min_count = 1);

/// Mean cosine over within-group pairs minus mean cosine over cross-group pairs.
double group_margin(const EmbeddingMatrix& emb, const ToyCorpus& corpus);

/// Fresh directory under the system temp path.
std::filesystem::path scratch_dir(const std::string& tag);

std::string read_bytes(const std::filesystem::path& path);

}  // namespace vcwe::testkit
