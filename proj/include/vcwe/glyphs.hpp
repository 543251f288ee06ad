// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace vcwe {

inline constexpr std::size_t kGlyphSide = 40;
inline constexpr std::size_t kGlyphPixels = kGlyphSide * kGlyphSide;

/// 40x40 grayscale image, row-major. 0 is background, 1 is ink; values may
/// be negative after mean-centering.
struct GlyphImage {
  std::array<double, kGlyphPixels> pixels{};

  double& at(std::size_t row, std::size_t col) { return pixels[row * kGlyphSide + col]; }
  double at(std::size_t row, std::size_t col) const { return pixels[row * kGlyphSide + col]; }

  friend bool operator==(const GlyphImage&, const GlyphImage&) = default;
};

using MeanImage = GlyphImage;

/// Reads a binary PGM (P5) file. Throws FormatError naming the file on
/// malformed input and DimensionError unless the image is 40x40.
GlyphImage read_pgm(const std::filesystem::path& path);

/// Writes "P5\n40 40\n255\n" + 1600 bytes; pixels are clamped to [0,1] and
/// rounded to the nearest 8-bit level.
void write_pgm(const GlyphImage& image, const std::filesystem::path& path);

/// Uppercase hex codepoint, at least four digits ("4F11").
std::string glyph_filename(char32_t codepoint);

class GlyphBank {
 public:
  GlyphBank() = default;

  void insert(char32_t codepoint, const GlyphImage& image);
  bool contains(char32_t codepoint) const { return images_.contains(codepoint); }
  const GlyphImage& at(char32_t codepoint) const;
  std::size_t size() const noexcept { return images_.size(); }
  bool empty() const noexcept { return images_.empty(); }
  const std::map<char32_t, GlyphImage>& images() const noexcept { return images_; }

  bool centered() const noexcept { return mean_.has_value(); }
  const std::optional<MeanImage>& mean() const noexcept { return mean_; }

  /// Codepoints from `chars` that have no image, in input order.
  std::vector<char32_t> missing(std::span<const char32_t> chars) const;

  /// Subtracts the bank's own pixel-wise mean. Throws StateError if already
  /// centered, DomainError if empty.
  GlyphBank centered_copy() const;
  /// Subtracts a previously computed mean (e.g. restored from a checkpoint).
  GlyphBank centered_copy(const MeanImage& mean) const;

 private:
  std::map<char32_t, GlyphImage> images_;
  std::optional<MeanImage> mean_;
};

MeanImage mean_image(const GlyphBank& bank);

/// Loads every *.pgm in `directory` whose stem parses as a hex codepoint.
GlyphBank load_glyph_bank(const std::filesystem::path& directory);

/// Writes one PGM per image. Refuses centered banks (negative pixels do not
/// survive the 8-bit format).
void save_glyph_bank(const GlyphBank& bank, const std::filesystem::path& directory);

GlyphBank center_bank(const GlyphBank& bank);

/// Deterministic pseudo-glyph used when no font is available: a hash of
/// (codepoint, seed) drives a set of strokes and blocks quantized to 8 bits.
GlyphImage synth_glyph(char32_t codepoint, std::uint64_t seed);

GlyphBank synth_glyph_bank(std::span<const char32_t> codepoints, std::uint64_t seed);

}  // namespace vcwe
