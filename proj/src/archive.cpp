// SPDX-License-Identifier: Apache-2.0
#include "vcwe/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "vcwe/error.hpp"

namespace vcwe::ad {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(std::string("truncated archive: ") + what);
}

}  // namespace

const Tensor& Archive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("archive has no tensor '" + name + "'");
  return it->second;
}

void write_archive(std::ostream& out, std::string_view magic, const nlohmann::json& meta,
                   const std::vector<NamedTensor>& tensors) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    manifest["tensors"].push_back({{"name", t.name}, {"shape", t.tensor->shape()}, {"offset", offset}});
    offset += t.tensor->size() * sizeof(double);
  }
  manifest["blob_bytes"] = offset;
  const std::string text = manifest.dump();

  std::string header(magic);
  put_u64(header, text.size());
  header += text;
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::string blob;
  blob.reserve(offset);
  for (const auto& t : tensors)
    for (double v : t.tensor->data()) put_u64(blob, std::bit_cast<std::uint64_t>(v));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw FormatError("archive write failed");
}

Archive read_archive(std::istream& in, std::string_view magic) {
  std::string head(magic.size(), '\0');
  read_exact(in, head.data(), head.size(), "magic");
  if (head.compare(0, magic.size() - 1, magic.substr(0, magic.size() - 1)) != 0)
    throw FormatError("not a " + std::string(magic.substr(0, magic.size() - 1)) + " archive");
  if (head.back() != magic.back())
    throw VersionError("unsupported archive version '" + std::string(1, head.back()) + "', expected '" +
                       std::string(1, magic.back()) + "'");

  char len_bytes[8];
  read_exact(in, len_bytes, 8, "manifest length");
  const std::uint64_t len = get_u64(len_bytes);
  if (len > (std::uint64_t{1} << 32)) throw FormatError("archive manifest length out of range");
  std::string text(len, '\0');
  read_exact(in, text.data(), text.size(), "manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive manifest is not valid JSON: ") + e.what());
  }

  Archive archive;
  try {
    archive.meta = manifest.at("meta");
    const auto blob_bytes = manifest.at("blob_bytes").get<std::uint64_t>();
    if (blob_bytes % 8 != 0) throw FormatError("archive blob size is not a multiple of 8");
    std::string blob(blob_bytes, '\0');
    read_exact(in, blob.data(), blob.size(), "tensor data");
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t count = shape_size(shape);
      if (offset % 8 != 0 || offset > blob_bytes || count > (blob_bytes - offset) / 8)
        throw FormatError("tensor '" + name + "' lies outside the archive blob");
      std::vector<double> data(count);
      for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<double>(get_u64(blob.data() + offset + 8 * i));
      archive.order.push_back(name);
      archive.tensors.emplace(name, Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed archive manifest: ") + e.what());
  }
  return archive;
}

}  // namespace vcwe::ad
