#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gandyn {

/// Reader for the comma-separated files this library writes: one header line, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// ValidationError if the column is missing.
  std::size_t column(const std::string& name) const;
  /// ValidationError naming the line if the cell is not a number.
  double number(std::size_t row, const std::string& name) const;
};

/// ValidationError (with the 1-based line number) on ragged rows or an empty input.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

}  // namespace gandyn
