#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nestmi {

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

// Fixed-point formatting for presentation tables.
std::string format_fixed(double v, int decimals);

std::string_view trim(std::string_view s);

// Splits one delimited record; does not handle quoting (values are numeric).
std::vector<std::string_view> split_fields(std::string_view line, char delim);

// Strict finite-double parse of a whole token; nullopt on any violation.
std::optional<double> parse_double(std::string_view token);

}  // namespace nestmi
