#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mgd/common.hpp"

namespace mgd {

// Floats are printed with 17 significant digits so a round-trip parse
// recovers identical values; line terminator is LF only.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline void emit_csv(const CsvTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "emit_csv: unwritable path " + path);
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out << ',';
        out << table.header[i];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        check(row.size() == table.header.size(), "emit_csv: non-rectangular table");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    }
    check(out.good(), "emit_csv: write failed for " + path);
}

inline CsvTable parse_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "parse_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            std::size_t pos = s.find(',', start);
            cells.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return cells;
    };
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            table.header = split(line);
            first = false;
            continue;
        }
        std::vector<double> row;
        for (const auto& cell : split(line)) row.push_back(std::stod(cell));
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace mgd
