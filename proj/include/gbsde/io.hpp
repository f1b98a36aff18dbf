#pragma once

#include "gbsde/core.hpp"

#include <filesystem>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

namespace gbsde {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

/// Minimal CSV builder: numbers use format_double, rows end in '\n'.
class CsvWriter {
public:
    explicit CsvWriter(std::initializer_list<std::string_view> header);

    CsvWriter& cell(double v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(int v) { return cell(static_cast<long long>(v)); }
    CsvWriter& cell(std::string_view v);
    CsvWriter& end_row();

    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
    bool row_open_ = false;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Parses the TOML problem schema (documented in docs/config.md).
ProblemSpec parse_problem_toml(const std::string& text);
ProblemSpec load_problem(const std::filesystem::path& path);

} // namespace gbsde
