#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lnc {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by header name; throws if missing.
    size_t col(const std::string& name) const;
};

/// Read a comma-separated file with a mandatory header row. No quoting
/// support; the formats used here never embed commas.
CsvTable read_csv(const std::filesystem::path& path);

/// Format a double with shortest round-trip representation (deterministic).
std::string format_double(double v);

/// Parse a decimal; throws std::runtime_error naming the offending token.
double parse_double(const std::string& tok);

}  // namespace lnc
