#pragma once

// UTF-8 aware text helpers shared by the corpus, quality and evalkit modules.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace aquilt::text {

std::string trim(std::string_view s);

// Trim plus collapse every run of whitespace to a single ASCII space.
std::string normalize_whitespace(std::string_view s);

bool is_blank(std::string_view s);

std::string to_lower_ascii(std::string_view s);

// Case-insensitive (ASCII) substring test.
bool contains_ci(std::string_view haystack, std::string_view needle);

bool is_ascii(std::string_view s);

// Decodes UTF-8 into code points. Invalid bytes decode as U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);

// Han ideographs, kana and Hangul: scripts tokenized per character.
bool is_cjk(char32_t cp);
// CJK symbols/punctuation and full-width ASCII punctuation.
bool is_cjk_punct(char32_t cp);

// Lowercased word tokens for alphabetic text; one token per CJK character.
// Punctuation and whitespace separate tokens and are dropped.
std::vector<std::string> word_tokens(std::string_view s);

// Splits into lines without the trailing '\n' (and '\r'). A final
// newline does not produce an extra empty line.
std::vector<std::string> split_lines(std::string_view s);

}  // namespace aquilt::text
