#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lgnmt::unicode {

// Throws ParseError on ill-formed UTF-8.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view text);
void append_utf8(std::string& out, char32_t cp);

bool is_valid_utf8(std::string_view utf8) noexcept;

// Unicode White_Space property.
bool is_whitespace(char32_t cp) noexcept;
// General category P* (Pc, Pd, Ps, Pe, Pi, Pf, Po).
bool is_punctuation(char32_t cp) noexcept;

std::string nfc(std::string_view utf8);

// One UTF-8 string per code point.
std::vector<std::string> code_points(std::string_view utf8);

}  // namespace lgnmt::unicode
