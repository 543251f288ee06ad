// SPDX-License-Identifier: Apache-2.0
#include "vcwe/glyphs.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "vcwe/error.hpp"
#include "vcwe/rng.hpp"

namespace vcwe {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::string& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

long parse_header_int(const std::string& token, const std::filesystem::path& path, const char* field) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw FormatError(path.string() + ": malformed PGM " + field + " '" + token + "'");
  if (token.size() > 6) throw FormatError(path.string() + ": PGM " + field + " out of range");
  return std::stol(token);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::optional<char32_t> parse_codepoint_stem(const std::string& stem) {
  if (stem.empty() || stem.size() > 6) return std::nullopt;
  char32_t cp = 0;
  for (char c : stem) {
    int digit;
    if (c >= '0' && c <= '9') digit = c - '0';
    else if (c >= 'A' && c <= 'F') digit = c - 'A' + 10;
    else if (c >= 'a' && c <= 'f') digit = c - 'a' + 10;
    else return std::nullopt;
    cp = cp * 16 + static_cast<char32_t>(digit);
  }
  return cp;
}

}  // namespace

GlyphImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open glyph file " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  std::size_t pos = 0;
  if (header_token(bytes, pos) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5) file");
  const long width = parse_header_int(header_token(bytes, pos), path, "width");
  const long height = parse_header_int(header_token(bytes, pos), path, "height");
  const long maxval = parse_header_int(header_token(bytes, pos), path, "maxval");
  if (maxval < 1 || maxval > 255) throw FormatError(path.string() + ": PGM maxval must be in 1..255");
  if (pos >= bytes.size()) throw FormatError(path.string() + ": truncated PGM header");
  ++pos;  // single whitespace byte before the raster
  if (width != static_cast<long>(kGlyphSide) || height != static_cast<long>(kGlyphSide))
    throw DimensionError(path.string() + ": expected 40x40 glyph, got " + std::to_string(width) + "x" +
                         std::to_string(height));
  if (bytes.size() - pos != kGlyphPixels)
    throw FormatError(path.string() + ": expected 1600 raster bytes, found " + std::to_string(bytes.size() - pos));

  GlyphImage image;
  for (std::size_t i = 0; i < kGlyphPixels; ++i) {
    const auto v = static_cast<unsigned char>(bytes[pos + i]);
    if (v > maxval) throw FormatError(path.string() + ": pixel exceeds maxval");
    image.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return image;
}

void write_pgm(const GlyphImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "P5\n" << kGlyphSide << ' ' << kGlyphSide << "\n255\n";
  std::string raster(kGlyphPixels, '\0');
  for (std::size_t i = 0; i < kGlyphPixels; ++i) raster[i] = static_cast<char>(to_byte(image.pixels[i]));
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

std::string glyph_filename(char32_t codepoint) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04X.pgm", static_cast<unsigned>(codepoint));
  return buf;
}

// ----------------------------------------------------------------- GlyphBank

void GlyphBank::insert(char32_t codepoint, const GlyphImage& image) {
  if (centered()) throw StateError("cannot insert into a centered glyph bank");
  images_[codepoint] = image;
}

const GlyphImage& GlyphBank::at(char32_t codepoint) const {
  auto it = images_.find(codepoint);
  if (it == images_.end()) throw MissingGlyphError({codepoint});
  return it->second;
}

std::vector<char32_t> GlyphBank::missing(std::span<const char32_t> chars) const {
  std::vector<char32_t> out;
  for (char32_t cp : chars)
    if (!images_.contains(cp)) out.push_back(cp);
  return out;
}

MeanImage mean_image(const GlyphBank& bank) {
  if (bank.empty()) throw DomainError("mean of an empty glyph bank");
  MeanImage mean;
  for (const auto& [cp, image] : bank.images())
    for (std::size_t i = 0; i < kGlyphPixels; ++i) mean.pixels[i] += image.pixels[i];
  const double n = static_cast<double>(bank.size());
  for (double& p : mean.pixels) p /= n;
  return mean;
}

GlyphBank GlyphBank::centered_copy(const MeanImage& mean) const {
  if (centered()) throw StateError("glyph bank is already centered");
  GlyphBank out;
  out.images_ = images_;
  for (auto& [cp, image] : out.images_)
    for (std::size_t i = 0; i < kGlyphPixels; ++i) image.pixels[i] -= mean.pixels[i];
  out.mean_ = mean;
  return out;
}

GlyphBank GlyphBank::centered_copy() const {
  if (centered()) throw StateError("glyph bank is already centered");
  return centered_copy(mean_image(*this));
}

GlyphBank center_bank(const GlyphBank& bank) { return bank.centered_copy(); }

GlyphBank load_glyph_bank(const std::filesystem::path& directory) {
  if (!std::filesystem::is_directory(directory))
    throw FormatError("glyph directory not found: " + directory.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  GlyphBank bank;
  for (const auto& file : files) {
    const auto cp = parse_codepoint_stem(file.stem().string());
    if (!cp) throw FormatError(file.string() + ": file name is not a hex codepoint");
    bank.insert(*cp, read_pgm(file));
  }
  return bank;
}

void save_glyph_bank(const GlyphBank& bank, const std::filesystem::path& directory) {
  if (bank.centered()) throw StateError("centered glyph banks cannot be saved as 8-bit images");
  std::filesystem::create_directories(directory);
  for (const auto& [cp, image] : bank.images()) write_pgm(image, directory / glyph_filename(cp));
}

// ---------------------------------------------------------------- synthetic

namespace {

void stamp(GlyphImage& img, long r, long c, double ink) {
  if (r < 0 || c < 0 || r >= static_cast<long>(kGlyphSide) || c >= static_cast<long>(kGlyphSide)) return;
  double& p = img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  p = std::max(p, ink);
}

// Thick line with a one-pixel soft edge.
void stroke(GlyphImage& img, double r0, double c0, double r1, double c1) {
  const double len = std::max(std::abs(r1 - r0), std::abs(c1 - c0));
  const int steps = static_cast<int>(std::ceil(len * 2)) + 1;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const long r = std::lround(r0 + t * (r1 - r0));
    const long c = std::lround(c0 + t * (c1 - c0));
    for (long dr = -1; dr <= 1; ++dr)
      for (long dc = -1; dc <= 1; ++dc) {
        const bool core = (dr == 0 || dc == 0);
        stamp(img, r + dr, c + dc, core ? 1.0 : 128.0 / 255.0);
      }
  }
}

}  // namespace

GlyphImage synth_glyph(char32_t codepoint, std::uint64_t seed) {
  Rng rng(mix_seed(static_cast<std::uint64_t>(codepoint), seed));
  GlyphImage img;
  constexpr double lo = 4.0, hi = 35.0;
  const std::size_t n_strokes = 4 + rng.below(5);
  for (std::size_t s = 0; s < n_strokes; ++s) {
    const double r = rng.uniform(lo, hi), c = rng.uniform(lo, hi);
    const double len = rng.uniform(8.0, 28.0);
    switch (rng.below(4)) {
      case 0: stroke(img, r, c, r, std::min(hi, c + len)); break;               // horizontal
      case 1: stroke(img, r, c, std::min(hi, r + len), c); break;               // vertical
      case 2: stroke(img, r, c, std::min(hi, r + len), std::max(lo, c - len)); break;  // left-falling
      default: stroke(img, r, c, std::min(hi, r + len / 2), std::min(hi, c + len / 2)); break;
    }
  }
  if (rng.below(2) == 0) {
    const double r = rng.uniform(lo, 26.0), c = rng.uniform(lo, 26.0), side = rng.uniform(5.0, 10.0);
    stroke(img, r, c, r, c + side);
    stroke(img, r + side, c, r + side, c + side);
    stroke(img, r, c, r + side, c);
    stroke(img, r, c + side, r + side, c + side);
  }
  return img;
}

GlyphBank synth_glyph_bank(std::span<const char32_t> codepoints, std::uint64_t seed) {
  GlyphBank bank;
  for (char32_t cp : codepoints) bank.insert(cp, synth_glyph(cp, seed));
  return bank;
}

}  // namespace vcwe
