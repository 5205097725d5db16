#pragma once
// Minimal CSV I/O. Readers skip leading '#' comment lines (manifest lines),
// handle double-quoted fields, and parse numbers strictly. Writers emit
// doubles with %.17g so that values round-trip and reruns are byte-identical.
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace firmfx {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, int> col_index;

    bool has_column(const std::string& name) const { return col_index.count(name) > 0; }
    // throws DataError if missing
    int col(const std::string& name) const;
    const std::string& cell(std::size_t row, int c) const { return rows[row][c]; }
};

CsvTable read_csv(const std::string& path);

// strict numeric parsing; empty string -> NaN for parse_double_opt
double parse_double(const std::string& s, const std::string& context);
double parse_double_opt(const std::string& s, const std::string& context);
long long parse_int(const std::string& s, const std::string& context);

std::string format_double(double v);

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& manifest_line,
              const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void field(const std::string& s);
    void field(double v);       // NaN written as empty
    void field(long long v);
    void field(int v) { field(static_cast<long long>(v)); }
    void end_row();

private:
    void sep();
    void* fp_;
    bool row_started_ = false;
};

// Writes a whole text file (used for reports and marker files); prepends
// the manifest line when nonempty.
void write_text_file(const std::string& path, const std::string& manifest_line,
                     const std::string& body);

} // namespace firmfx
