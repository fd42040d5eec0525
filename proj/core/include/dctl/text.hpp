#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dctl {

using json = nlohmann::json;

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Trim, collapse internal whitespace runs to one space, ASCII-lowercase.
std::string canonicalize(std::string_view s);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Number of UTF-8 code points. Invalid lead bytes count as one each.
std::size_t utf8_length(std::string_view s);

/// Lowercased alphanumeric tokens; any non-ASCII byte is treated as a word character.
std::vector<std::string> tokenize(std::string_view s);

std::size_t whitespace_token_count(std::string_view s);

/// Decimal numeric literals appearing in free text ("40", "2.5", "-3").
std::vector<std::string> numeric_literals(std::string_view s);

/// Shortest decimal rendering without trailing zeros ("40", "2.5").
std::string format_number(double v);

/// Parses a numeric literal; nullopt for anything else.
std::optional<double> parse_number(std::string_view s);

/// Human-readable rendering of a JSON value for messages and fact text:
/// strings unquoted, lists comma-joined, numbers via format_number.
std::string display_value(const json& v);

/// Deep copy with numbers unified (integral reals become integers) and strings trimmed.
json canonical_value(const json& v);

/// Replaces every "${name}" occurrence using `lookup`. A string that is exactly
/// one placeholder is replaced by the bound JSON value itself (arrays stay arrays).
/// Unbound names are collected into `missing`.
json substitute_placeholders(const json& tmpl, const json& bindings,
                             std::vector<std::string>& missing);

}  // namespace dctl

namespace dctl {

/// One dot-free, lowercase segment of a fact key: spaces and dots become '_'.
std::string key_segment(std::string_view s);

/// Text up to and including the first '.', '!' or '?' followed by space or end.
std::string first_sentence(std::string_view s);

}  // namespace dctl
