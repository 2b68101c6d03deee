#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace fcst {

/// Shortest decimal text that parses back to exactly `value`
/// (std::to_chars general form: 1.0 -> "1", 0.25 -> "0.25", 1e-07 -> "1e-07").
std::string format_double(double value);

/// Parses the whole of `text` as a double. Returns nullopt if any character is
/// left over or the text is not a number. Accepts "nan"/"inf" spellings; the
/// caller decides whether non-finite values are acceptable.
std::optional<double> parse_double(std::string_view text);

std::string_view trim(std::string_view text) noexcept;

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename, so readers never observe a
/// half-written file.
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);

/// ISO-8601 UTC with second resolution, e.g. "2025-01-31T12:00:00Z".
std::string utc_timestamp();

inline constexpr std::string_view kToolVersion = "0.1.0";

}  // namespace fcst
