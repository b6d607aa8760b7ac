#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace contraguard::text {

std::string trim(std::string_view s);
/// Collapses every whitespace run to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);
std::string to_lower(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace contraguard::text
