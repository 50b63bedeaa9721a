#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cforge::unicode {

std::string nfc(std::string_view utf8);
std::string lowercase(std::string_view utf8);

std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view scalars);
std::string encode(char32_t scalar);

bool is_punctuation(char32_t c);
bool is_space(char32_t c);

/// NFC, punctuation stripped, lowercased, split on whitespace.
std::vector<std::string> tokenize(std::string_view utf8);

/// Collapses whitespace runs (including tabs and newlines) to one space and trims.
std::string squeeze_spaces(std::string_view utf8);

}  // namespace cforge::unicode
