#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pbsae::csv {

// A parsed comma separated file with a header row. Quoting is not supported;
// none of the formats used by this project need embedded commas.
class Table {
 public:
  static Table read(const std::string& path);
  static Table parse(std::istream& in, const std::string& source_name);

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return cells_.size(); }
  bool has_column(std::string_view name) const;
  // Index of `name`; throws SchemaError naming the column when absent.
  std::size_t column(std::string_view name) const;

  const std::string& cell(std::size_t row, std::size_t col) const { return cells_[row][col]; }
  double number(std::size_t row, std::size_t col) const;

  const std::string& source() const noexcept { return source_; }

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
};

// Checks that every name in `required` is present, throwing a SchemaError for
// the first one that is missing.
void require_columns(const Table& table, const std::vector<std::string>& required);

// Round-trip exact formatting of doubles ("NA" for NaN).
std::string format_double(double v);

}  // namespace pbsae::csv
