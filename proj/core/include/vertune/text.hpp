#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vertune {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Canonical form used for prompt dedup: lower-cased, internal whitespace
// runs collapsed to single spaces, trimmed.
std::string normalize_text(std::string_view s);

// Alphabetic word tokens, lower-cased, in order of appearance.
std::vector<std::string> word_tokens(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

std::string format_fixed(double value, int decimals);

} // namespace vertune
