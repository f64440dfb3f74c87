#pragma once

#include <string>
#include <string_view>

// UTF-8 and whitespace helpers shared by the parsers and the matchers.
namespace bookseg::text {

/// Invalid sequences decode to U+FFFD, one per offending byte.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);
void append_utf8(std::string& out, char32_t cp);

bool is_space(char32_t cp);
bool is_punctuation(char32_t cp);
bool is_letter(char32_t cp);
char32_t to_lower(char32_t cp);

std::string trim(std::string_view s);
/// Collapses whitespace runs (ASCII, Unicode spaces, control chars) to one ASCII space and trims.
std::string collapse_whitespace(std::string_view s);

/// Number of code points.
std::size_t length(std::string_view s);
/// At most `max_cp` leading code points of `s`.
std::string truncate(std::string_view s, std::size_t max_cp);

std::string xml_escape(std::string_view s);

}  // namespace bookseg::text
