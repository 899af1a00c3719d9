#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gpk::csv {

/// Shortest decimal text that parses back to exactly `value`.
[[nodiscard]] std::string format_double(double value);

[[nodiscard]] std::optional<double> parse_double(std::string_view text) noexcept;

[[nodiscard]] std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Comma-joined row of doubles.
[[nodiscard]] std::string join(const std::vector<double>& values);

}  // namespace gpk::csv
