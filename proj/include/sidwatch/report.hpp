#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sidwatch {

struct ReportRow {
    std::string label;
    std::vector<std::optional<double>> cells;

    bool operator==(const ReportRow&) const = default;
};

// Row/column table mirroring the layout of the published result tables.
// Cells hold unrounded values quantized to 6 decimals so the CSV form carries
// everything the markdown form shows.
struct ReportTable {
    std::string title;
    std::string row_header = "Approach";
    std::vector<std::string> columns;
    std::vector<ReportRow> rows;
    bool integral = false; // counts rather than percentages

    void add_row(std::string label, std::vector<std::optional<double>> cells);
    bool operator==(const ReportTable&) const = default;
};

// Optional first line for generated files; empty string means no header.
std::string generation_header(bool enabled);

// "# title: ..." then a header row and one row per entry; empty cells for
// missing values, 6 decimals otherwise (integers for integral tables).
void write_csv(const ReportTable& table, std::ostream& out, const std::string& header = {});
// Aligned markdown table; one-decimal display rounding.
void write_markdown(const ReportTable& table, std::ostream& out, const std::string& header = {});
// Inverse of write_csv. Throws ParseError.
ReportTable read_csv(std::istream& in, const std::string& source = "<report>");

} // namespace sidwatch
