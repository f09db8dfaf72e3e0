#include "etcsim/table_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace etcsim {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

std::string to_csv(const Table& table) {
    std::ostringstream out;
    for (size_t k = 0; k < table.header.size(); ++k) {
        if (k) out << ',';
        out << csv_escape(table.header[k]);
    }
    out << '\n';
    for (size_t r = 0; r < table.rows.size(); ++r) {
        for (size_t k = 0; k < table.rows[r].size(); ++k) {
            if (k) out << ',';
            out << format_double(table.rows[r][k]);
        }
        if (r < table.text.size()) {
            for (const auto& cell : table.text[r]) out << ',' << csv_escape(cell);
        }
        out << '\n';
    }
    return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

}  // namespace

Table parse_csv(const std::string& content, int numeric_columns) {
    Table table;
    std::istringstream in(content);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (first) {
            table.header = std::move(cells);
            first = false;
            continue;
        }
        std::vector<double> nums;
        std::vector<std::string> text;
        for (size_t k = 0; k < cells.size(); ++k) {
            if (static_cast<int>(k) < numeric_columns) {
                nums.push_back(std::strtod(cells[k].c_str(), nullptr));
            } else {
                text.push_back(cells[k]);
            }
        }
        table.rows.push_back(std::move(nums));
        table.text.push_back(std::move(text));
    }
    return table;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace etcsim
