#pragma once

// Small CSV reader for the tool's own outputs, plus the adjacency-matrix
// export format (header row/column carry frame indices).

#include <string>
#include <vector>

#include "trg/errors.hpp"

namespace trg {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Parses header + body; every row must match the header width. Throws
// CsvError naming the offending line. An empty body is an error — the plot
// command has nothing to draw.
CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable read_csv(const std::string& path);

std::string adjacency_csv_string(const std::vector<double>& matrix, int nodes);
void write_adjacency_csv(const std::vector<double>& matrix, int nodes, const std::string& path);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace trg
