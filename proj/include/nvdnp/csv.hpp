#pragma once

// Minimal numeric CSV tables: one header line, comma separated, values
// printed with 9 significant digits.

#include <iosfwd>
#include <string>
#include <vector>

namespace nvdnp::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
  std::size_t column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
};

std::string format_number(double value);

void write(std::ostream& out, const Table& table);
void write_file(const std::string& path, const Table& table);

/// Parses a table written by `write`. Throws InvalidArgument naming the
/// offending line on malformed input.
Table read(std::istream& in);
Table read_file(const std::string& path);

}  // namespace nvdnp::csv
