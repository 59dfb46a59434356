#ifndef CAPEVAL_CSV_HPP
#define CAPEVAL_CSV_HPP

#include <string>
#include <string_view>
#include <vector>

namespace capeval::csv {

/// Quotes a field when it contains a comma, quote or line break.
std::string escape(std::string_view field);

/// Splits one CSV line, honoring double-quoted fields.
std::vector<std::string> split_line(std::string_view line);

/// Fixed-point with `decimals` digits; "-0.000000" is printed as "0.000000".
std::string format_fixed(double value, int decimals = 6);

}  // namespace capeval::csv

#endif  // CAPEVAL_CSV_HPP
