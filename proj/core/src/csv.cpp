#include "pbsae/csv.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "pbsae/error.hpp"

namespace pbsae::csv {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

Table Table::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return parse(in, path);
}

Table Table::parse(std::istream& in, const std::string& source_name) {
  Table t;
  t.source_ = source_name;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(source_name + ": empty file", "");
  t.header_ = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto row = split(line);
    if (row.size() != t.header_.size()) {
      throw SchemaError(source_name + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header_.size()) + " fields, found " +
                            std::to_string(row.size()),
                        "");
    }
    t.cells_.push_back(std::move(row));
  }
  return t;
}

bool Table::has_column(std::string_view name) const {
  for (const auto& h : header_)
    if (h == name) return true;
  return false;
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  throw SchemaError(source_ + ": missing column '" + std::string(name) + "'", std::string(name));
}

double Table::number(std::size_t row, std::size_t col) const {
  const std::string& s = cells_[row][col];
  if (s == "NA" || s == "nan" || s == "NaN") return std::nan("");
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw SchemaError(source_ + ": row " + std::to_string(row + 2) + ", column '" + header_[col] +
                          "': not a number: '" + s + "'",
                      header_[col]);
  }
  return v;
}

void require_columns(const Table& table, const std::vector<std::string>& required) {
  for (const auto& name : required) table.column(name);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace pbsae::csv
