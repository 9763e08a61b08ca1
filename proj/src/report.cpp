#include "sidwatch/report.hpp"

#include "sidwatch/errors.hpp"
#include "sidwatch/metrics.hpp"
#include "sidwatch/version.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace sidwatch {

namespace {

double quantize(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    double out = 0.0;
    std::from_chars(buf, buf + std::char_traits<char>::length(buf), out);
    return out == 0.0 ? 0.0 : out;
}

std::string csv_cell(const std::optional<double>& v, bool integral) {
    if (!v) return {};
    char buf[64];
    std::snprintf(buf, sizeof buf, integral ? "%.0f" : "%.6f", *v);
    return buf;
}

std::string display_cell(const std::optional<double>& v, bool integral) {
    if (!v) return {};
    if (integral) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.0f", *v);
        return buf;
    }
    return format_display(*v);
}

// Labels and titles are plain text; commas would break the CSV.
std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line, const std::string& source, std::size_t n) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw ParseError(source, n, "unterminated quoted field");
    out.push_back(std::move(cur));
    return out;
}

} // namespace

void ReportTable::add_row(std::string label, std::vector<std::optional<double>> cells) {
    if (cells.size() != columns.size())
        throw std::invalid_argument("row '" + label + "' has " + std::to_string(cells.size()) + " cells, expected " +
                                    std::to_string(columns.size()));
    for (auto& c : cells)
        if (c) c = quantize(*c);
    rows.push_back({std::move(label), std::move(cells)});
}

std::string generation_header(bool enabled) {
    if (!enabled) return {};
    const auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
    const auto day = std::chrono::floor<std::chrono::days>(now);
    const std::chrono::year_month_day ymd{day};
    const std::chrono::hh_mm_ss hms{now - day};
    char buf[96];
    std::snprintf(buf, sizeof buf, "generated by sidwatch %s at %04d-%02u-%02uT%02d:%02d:%02dZ", version,
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

void write_csv(const ReportTable& table, std::ostream& out, const std::string& header) {
    if (!header.empty()) out << "# " << header << '\n';
    out << "# title: " << table.title << '\n';
    if (table.integral) out << "# integral\n";
    out << csv_escape(table.row_header);
    for (const auto& c : table.columns) out << ',' << csv_escape(c);
    out << '\n';
    for (const auto& row : table.rows) {
        out << csv_escape(row.label);
        for (const auto& cell : row.cells) out << ',' << csv_cell(cell, table.integral);
        out << '\n';
    }
}

void write_markdown(const ReportTable& table, std::ostream& out, const std::string& header) {
    if (!header.empty()) out << "<!-- " << header << " -->\n";
    out << "## " << table.title << "\n\n";

    std::vector<std::vector<std::string>> grid;
    grid.emplace_back();
    grid.back().push_back(table.row_header);
    for (const auto& c : table.columns) grid.back().push_back(c);
    for (const auto& row : table.rows) {
        grid.emplace_back();
        grid.back().push_back(row.label);
        for (const auto& cell : row.cells) grid.back().push_back(display_cell(cell, table.integral));
    }
    std::vector<std::size_t> width(table.columns.size() + 1, 3);
    for (const auto& r : grid)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());

    auto emit = [&](const std::vector<std::string>& r) {
        out << '|';
        for (std::size_t i = 0; i < r.size(); ++i) {
            const std::size_t pad = width[i] - r[i].size();
            // Labels left-aligned, numbers right-aligned.
            if (i == 0) out << ' ' << r[i] << std::string(pad, ' ') << " |";
            else out << ' ' << std::string(pad, ' ') << r[i] << " |";
        }
        out << '\n';
    };
    emit(grid.front());
    out << '|';
    for (std::size_t i = 0; i < width.size(); ++i)
        out << (i == 0 ? ":" : "") << std::string(width[i] + 1, '-') << (i == 0 ? "" : ":") << '|';
    out << '\n';
    for (std::size_t r = 1; r < grid.size(); ++r) emit(grid[r]);
}

ReportTable read_csv(std::istream& in, const std::string& source) {
    ReportTable table;
    bool have_header = false;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.rfind("# title: ", 0) == 0) table.title = line.substr(9);
            else if (line == "# integral") table.integral = true;
            continue;
        }
        auto fields = csv_split(line, source, n);
        if (!have_header) {
            table.row_header = fields.front();
            table.columns.assign(fields.begin() + 1, fields.end());
            have_header = true;
            continue;
        }
        if (fields.size() != table.columns.size() + 1)
            throw ParseError(source, n, "expected " + std::to_string(table.columns.size() + 1) + " fields, got " +
                                            std::to_string(fields.size()));
        std::vector<std::optional<double>> cells;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            if (fields[i].empty()) {
                cells.emplace_back();
                continue;
            }
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), v);
            if (ec != std::errc{} || ptr != fields[i].data() + fields[i].size())
                throw ParseError(source, n, "bad numeric cell '" + fields[i] + "'");
            cells.emplace_back(v);
        }
        table.add_row(fields.front(), std::move(cells));
    }
    if (!have_header) throw ParseError(source, n, "report has no header row");
    return table;
}

} // namespace sidwatch
