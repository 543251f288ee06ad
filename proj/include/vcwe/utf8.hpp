// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace vcwe::utf8 {

/// Strict decoder: rejects overlong forms, surrogates and truncated sequences.
/// Throws DecodeError with the offset of the offending byte.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view codepoints);
std::string encode(char32_t codepoint);

}  // namespace vcwe::utf8
