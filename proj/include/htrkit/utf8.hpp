#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace htrkit::utf8 {

/// Decodes UTF-8 into Unicode scalar values. Throws htrkit::Error on
/// malformed input.
std::u32string decode(std::string_view text);

std::string encode(char32_t cp);
std::string encode(std::u32string_view cps);

/// Splits into one UTF-8 string per code point.
std::vector<std::string> split_chars(std::string_view text);

/// Number of code points in `text`.
std::size_t length(std::string_view text);

/// Canonical composition (NFC).
std::string nfc(std::string_view text);

bool is_space(char32_t cp);

/// Strips leading and trailing Unicode whitespace.
std::u32string trim(std::u32string_view text);

/// Maximal runs of non-whitespace.
std::vector<std::u32string> words(std::u32string_view text);

}  // namespace htrkit::utf8
