#include "trg/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace trg {

namespace {

std::vector<std::string> split_line(const std::string& line) {
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
    return out;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw CsvError(origin + ":" + std::to_string(lineno) + ": row has " +
                           std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw CsvError(origin + ":1: missing header row");
    if (t.rows.empty()) throw CsvError(origin + ":" + std::to_string(lineno) + ": empty CSV body");
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path);
}

std::string adjacency_csv_string(const std::vector<double>& matrix, int nodes) {
    if (static_cast<long>(matrix.size()) != static_cast<long>(nodes) * nodes)
        throw DimensionError("adjacency_csv: " + std::to_string(matrix.size()) +
                             " values for a " + std::to_string(nodes) + "-node matrix");
    std::string out = "frame";
    for (int j = 0; j < nodes; ++j) out += "," + std::to_string(j);
    out += "\n";
    char buf[64];
    for (int i = 0; i < nodes; ++i) {
        out += std::to_string(i);
        for (int j = 0; j < nodes; ++j) {
            std::snprintf(buf, sizeof(buf), "%.8f", matrix[static_cast<long>(i) * nodes + j]);
            out += ",";
            out += buf;
        }
        out += "\n";
    }
    return out;
}

void write_adjacency_csv(const std::vector<double>& matrix, int nodes, const std::string& path) {
    write_text_file(path, adjacency_csv_string(matrix, nodes));
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("short write to '" + path + "'");
}

}  // namespace trg
