#pragma once

#include <string>
#include <vector>

namespace etcsim {

/// In-memory rectangular table used for the trajectory/event CSV files.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;       // numeric columns
    std::vector<std::vector<std::string>> text;  // optional trailing text columns
};

/// Formats a double with enough digits to round-trip exactly.
[[nodiscard]] std::string format_double(double v);

/// RFC-4180-style quoting: fields containing commas, quotes, or newlines
/// are quoted; embedded quotes are doubled.
[[nodiscard]] std::string csv_escape(const std::string& field);

[[nodiscard]] std::string to_csv(const Table& table);

/// Parses a CSV produced by to_csv. Numeric cells are round-tripped via
/// strtod; non-numeric trailing cells land in `text`.
[[nodiscard]] Table parse_csv(const std::string& content, int numeric_columns);

void write_file(const std::string& path, const std::string& content);
[[nodiscard]] std::string read_file(const std::string& path);

}  // namespace etcsim
