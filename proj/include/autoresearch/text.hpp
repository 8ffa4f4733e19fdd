#pragma once
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the parsers and renderers.
namespace autoresearch::text {

std::string trim(std::string_view s);
std::string trim_right(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool iequals(std::string_view a, std::string_view b);

std::vector<std::string> split(std::string_view s, char sep);

// Splits into lines; the returned lines keep their terminating "\n" (or
// "\r\n") so callers can reassemble the input byte-for-byte.
std::vector<std::string> split_lines_keep_endings(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

// Lowercased runs of ASCII alphanumerics.
std::vector<std::string> alnum_tokens(std::string_view s);

// Whitespace-separated words.
std::vector<std::string> words(std::string_view s);
std::size_t word_count(std::string_view s);

// Lowercase and collapse internal whitespace runs to one space.
std::string normalize_title(std::string_view s);

// Largest prefix length <= max_bytes that does not split a UTF-8 sequence.
std::size_t utf8_safe_prefix(std::string_view s, std::size_t max_bytes);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::optional<double> parse_number(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

} // namespace autoresearch::text
