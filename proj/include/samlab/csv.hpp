#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace samlab::csv {

/// 17 significant digits with '.' as the decimal separator; non-finite
/// values are written as nan, inf or -inf.
std::string format_double(double v);

std::vector<std::string> split(std::string_view line, char sep = ',');

/// Throws ContractError when `text` is not a complete decimal number.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string join(const std::vector<std::string>& fields, char sep = ',');

}  // namespace samlab::csv
