#include "firmfx/csv.hpp"
#include "firmfx/errors.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace firmfx {

int CsvTable::col(const std::string& name) const {
    auto it = col_index.find(name);
    if (it == col_index.end())
        throw DataError("missing required column: " + name);
    return it->second;
}

static std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open file: " + path);
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!have_header && !line.empty() && line[0] == '#')
            continue; // manifest / comment lines before the header
        if (line.empty() || (line.size() == 1 && line[0] == '\r'))
            continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            for (auto& f : fields) {
                // strip surrounding whitespace in header names
                std::size_t a = f.find_first_not_of(" \t");
                std::size_t b = f.find_last_not_of(" \t");
                f = (a == std::string::npos) ? std::string() : f.substr(a, b - a + 1);
            }
            t.header = fields;
            for (std::size_t i = 0; i < fields.size(); ++i)
                t.col_index[fields[i]] = static_cast<int>(i);
            have_header = true;
        } else {
            if (fields.size() != t.header.size())
                throw DataError(path + ": row " + std::to_string(t.rows.size() + 2) +
                                " has " + std::to_string(fields.size()) +
                                " fields, expected " + std::to_string(t.header.size()));
            t.rows.push_back(std::move(fields));
        }
    }
    if (!have_header)
        throw DataError(path + ": empty file (no header row)");
    return t;
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw DataError("cannot parse number '" + s + "' (" + context + ")");
    return v;
}

double parse_double_opt(const std::string& s, const std::string& context) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos)
        return std::numeric_limits<double>::quiet_NaN();
    return parse_double(s, context);
}

long long parse_int(const std::string& s, const std::string& context) {
    long long v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw DataError("cannot parse integer '" + s + "' (" + context + ")");
    return v;
}

std::string format_double(double v) {
    if (std::isnan(v))
        return std::string();
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

CsvWriter::CsvWriter(const std::string& path, const std::string& manifest_line,
                     const std::vector<std::string>& header) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f)
        throw DataError("cannot open file for writing: " + path);
    fp_ = f;
    if (!manifest_line.empty())
        std::fprintf(f, "# %s\n", manifest_line.c_str());
    for (std::size_t i = 0; i < header.size(); ++i)
        std::fprintf(f, "%s%s", i ? "," : "", header[i].c_str());
    std::fprintf(f, "\n");
}

CsvWriter::~CsvWriter() {
    if (fp_) {
        if (row_started_)
            std::fputc('\n', static_cast<std::FILE*>(fp_));
        std::fclose(static_cast<std::FILE*>(fp_));
    }
}

void CsvWriter::sep() {
    if (row_started_)
        std::fputc(',', static_cast<std::FILE*>(fp_));
    row_started_ = true;
}

void CsvWriter::field(const std::string& s) {
    sep();
    std::FILE* f = static_cast<std::FILE*>(fp_);
    if (s.find_first_of(",\"\n") != std::string::npos) {
        std::fputc('"', f);
        for (char c : s) {
            if (c == '"') std::fputc('"', f);
            std::fputc(c, f);
        }
        std::fputc('"', f);
    } else {
        std::fputs(s.c_str(), f);
    }
}

void CsvWriter::field(double v) {
    sep();
    std::fputs(format_double(v).c_str(), static_cast<std::FILE*>(fp_));
}

void CsvWriter::field(long long v) {
    sep();
    std::fprintf(static_cast<std::FILE*>(fp_), "%lld", v);
}

void CsvWriter::end_row() {
    std::fputc('\n', static_cast<std::FILE*>(fp_));
    row_started_ = false;
}

void write_text_file(const std::string& path, const std::string& manifest_line,
                     const std::string& body) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f)
        throw DataError("cannot open file for writing: " + path);
    if (!manifest_line.empty())
        std::fprintf(f, "# %s\n", manifest_line.c_str());
    std::fwrite(body.data(), 1, body.size(), f);
    std::fclose(f);
}

} // namespace firmfx
