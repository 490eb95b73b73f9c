#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hydrocar {

// Comma-separated table with a mandatory header line. Fields are trimmed;
// quoting is not supported (ids never contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Column position of `name`; throws InputError when absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in, const std::vector<std::string>& required_columns);

// Empty field gives nullopt; anything unparsable throws InputError naming the line.
std::optional<double> parse_optional_double(const std::string& field, std::size_t line,
                                            const std::string& column);
double parse_double(const std::string& field, std::size_t line, const std::string& column);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace hydrocar
