#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Small text utilities: CSV record splitting, strict number parsing and
// deterministic number formatting.
namespace her2::text {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

// Splits one CSV record (no trailing newline). Fields may be wrapped in double
// quotes; "" inside a quoted field is a literal quote. Returns nullopt on an
// unterminated quote.
std::optional<std::vector<std::string>> split_csv_record(std::string_view line);

// Quotes a field only when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

// Reads logical lines, stripping a trailing '\r' (CRLF input).
std::vector<std::string> read_lines(std::string_view content);

// Strict parse: the whole (trimmed) token must be a finite number.
std::optional<double> parse_double(std::string_view token) noexcept;
std::optional<long long> parse_int(std::string_view token) noexcept;

// Shortest representation that round-trips exactly.
std::string format_double(double v);
// Fixed number of decimals, "-0.000" normalised to "0.000".
std::string format_fixed(double v, int decimals);

// Orders digit runs by value, so "2" < "10" and "s0002" < "s0010".
bool natural_less(std::string_view a, std::string_view b) noexcept;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace her2::text
