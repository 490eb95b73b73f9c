#include "hydrocar/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "hydrocar/error.hpp"
#include "hydrocar/network.hpp"

namespace hydrocar {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw InputError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in, const std::vector<std::string>& required_columns) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw InputError("missing header line");
  for (const auto& name : required_columns) table.column(name);
  return table;
}

std::optional<double> parse_optional_double(const std::string& field, std::size_t line,
                                            const std::string& column) {
  if (field.empty() || field == "NA") return std::nullopt;
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw InputError("line " + std::to_string(line) + ": column '" + column +
                     "' is not a number: '" + field + "'");
  }
  return value;
}

double parse_double(const std::string& field, std::size_t line, const std::string& column) {
  auto value = parse_optional_double(field, line, column);
  if (!value) {
    throw InputError("line " + std::to_string(line) + ": column '" + column + "' is empty");
  }
  return *value;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

WaterNetwork parse_network(std::istream& nodes_csv, std::istream& segments_csv) {
  const auto node_table = read_csv(nodes_csv, {"node_id", "x", "y"});
  const auto c_id = node_table.column("node_id");
  const auto c_x = node_table.column("x");
  const auto c_y = node_table.column("y");
  std::vector<Node> nodes;
  for (std::size_t r = 0; r < node_table.rows.size(); ++r) {
    const auto& row = node_table.rows[r];
    const auto line = node_table.line_numbers[r];
    if (row[c_id].empty()) throw InputError("line " + std::to_string(line) + ": empty node_id");
    const auto x = parse_optional_double(row[c_x], line, "x");
    const auto y = parse_optional_double(row[c_y], line, "y");
    if (x.has_value() != y.has_value()) {
      throw InputError("line " + std::to_string(line) + ": node '" + row[c_id] +
                       "' has only one coordinate");
    }
    Node node{row[c_id], std::nullopt};
    if (x) node.location = Point{*x, *y};
    nodes.push_back(std::move(node));
  }

  const auto seg_table = read_csv(segments_csv, {"from_node", "to_node", "length_m"});
  const auto c_from = seg_table.column("from_node");
  const auto c_to = seg_table.column("to_node");
  const auto c_len = seg_table.column("length_m");
  std::vector<PipeSegment> segments;
  for (std::size_t r = 0; r < seg_table.rows.size(); ++r) {
    const auto& row = seg_table.rows[r];
    const auto line = seg_table.line_numbers[r];
    const double length = parse_double(row[c_len], line, "length_m");
    if (!(length > 0.0)) {
      throw InputError("line " + std::to_string(line) + ": non-positive length_m " + row[c_len]);
    }
    segments.push_back({row[c_from], row[c_to], length});
  }
  return WaterNetwork(std::move(nodes), std::move(segments));
}

}  // namespace hydrocar
