#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridmdp/util.hpp"

namespace gridmdp::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
    int require_column(const std::string& name, const std::string& file) const {
        int c = column(name);
        if (c < 0) throw DataError(file + ": missing column '" + name + "'");
        return c;
    }
};

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        std::size_t b = cell.find_first_not_of(" \t\r");
        std::size_t e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

/// Reads a comma-separated table. First non-comment line is the header.
/// Lines starting with '#' and blank lines are ignored.
inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    Table t;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_line(line);
        if (t.header.empty())
            t.header = std::move(cells);
        else
            t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw DataError(path + ": malformed header (file empty?)");
    return t;
}

inline double to_double(const std::string& s, const std::string& ctx) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(ctx + ": not a number: '" + s + "'");
    }
}

inline long to_long(const std::string& s, const std::string& ctx) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(ctx + ": not an integer: '" + s + "'");
    }
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw DataError("cannot write file: " + path);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }
    std::ofstream& stream() { return out_; }

private:
    std::ofstream out_;
};

}  // namespace gridmdp::csv
