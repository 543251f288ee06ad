// SPDX-License-Identifier: Apache-2.0
#include "vcwe/error.hpp"

#include <cstdio>

namespace vcwe {

namespace {

std::string describe_missing(const std::vector<char32_t>& missing) {
  std::string msg = "missing glyphs for " + std::to_string(missing.size()) + " character(s):";
  char buf[16];
  for (char32_t cp : missing) {
    std::snprintf(buf, sizeof buf, " %04X", static_cast<unsigned>(cp));
    msg += buf;
  }
  return msg;
}

}  // namespace

MissingGlyphError::MissingGlyphError(std::vector<char32_t> missing)
    : Error(describe_missing(missing)), missing_(std::move(missing)) {}

}  // namespace vcwe
