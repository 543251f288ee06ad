// SPDX-License-Identifier: Apache-2.0
//
// Named-tensor container: magic bytes, a little-endian u64 manifest length,
// a JSON manifest {"meta", "tensors": [{name, shape, offset}], "blob_bytes"}
// and a blob of little-endian IEEE-754 doubles. Offsets are in bytes from
// the start of the blob.
#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vcwe/tensor.hpp"

namespace vcwe::ad {

struct NamedTensor {
  std::string name;
  const Tensor* tensor;
};

struct Archive {
  nlohmann::json meta;
  std::vector<std::string> order;
  std::map<std::string, Tensor> tensors;

  /// Throws FormatError when absent.
  const Tensor& at(const std::string& name) const;
};

/// `magic` is written verbatim; its last byte doubles as the format version.
void write_archive(std::ostream& out, std::string_view magic, const nlohmann::json& meta,
                   const std::vector<NamedTensor>& tensors);

/// Throws FormatError on a foreign prefix or truncation and VersionError when
/// only the trailing version byte of `magic` differs.
Archive read_archive(std::istream& in, std::string_view magic);

}  // namespace vcwe::ad
